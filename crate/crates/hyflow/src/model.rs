//! A loaded model: automaton, run configuration and plotting hint.

use hyflow_core::automaton::HybridAutomaton;
use hyflow_core::engine::SimConfig;

/// How to plot a flowpipe. With `xy` set and two outputs, the second
/// output is drawn against the first; otherwise each output is drawn
/// against time.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PlotHint {
    pub outputs: Vec<usize>,
    pub xy: bool,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub ha: HybridAutomaton,
    pub cfg: SimConfig,
    pub plot: PlotHint,
    /// Notes produced while loading, such as guard rewrites.
    pub warnings: Vec<String>,
}

/// Defaults used when a model file leaves a setting out.
pub fn default_config() -> SimConfig {
    SimConfig { t_f: 10.0, dt: 0.01, ..SimConfig::default() }
}
