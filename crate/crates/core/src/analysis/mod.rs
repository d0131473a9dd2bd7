//! Communication graphs, security-bound calculators, exact verification on
//! tiny instances, and amplification-by-shuffling bounds.

pub mod amplification;
pub mod bounds;
pub mod exact;
pub mod graph;

pub use amplification::{amplification_bound, AmplificationReport};
pub use bounds::{
    component_bound, disconnect_bound, empirical_disconnect_prob, q_power_expectation_bound, BoundReport,
    DisconnectMode, PreconditionCheck, QPowerCompanion,
};
pub use exact::{
    exact_collision_prob, exact_protocol_distribution, exact_q_power_expectation, exact_tvd_same_sum,
    lemma_chain, worst_average_check, ExactLaw, LemmaChainReport, TvdSummary, WorstAverageReport,
    DEFAULT_EXACT_CAP,
};
pub use graph::{build_comm_graph, count_components, empirical_component_dist, CommGraph, ComponentHistogram};
