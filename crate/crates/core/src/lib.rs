//! Link-level simulator and beamforming optimizer for multi-functional
//! reconfigurable intelligent surfaces (MF-RIS) serving a multi-user MISO
//! downlink, with passive, STAR and active surfaces as baselines.

pub mod architectures;
pub mod bench;
pub mod channels;
pub mod error;
pub mod model;
pub mod optimizer;

pub use architectures::{
    assign_ms_groups, enforce_global_power, feasible, project_profile, quantize_phase,
    CouplingConstraint, FeasibleSet, PhaseDifferenceSet,
};
pub use channels::{
    classify_side, generate_channels, pathloss_db, placement_search, GeometryScene, LinkParams,
    Placement, PlacementResult,
};
pub use error::{Error, Result};
pub use model::{
    dbm_to_watts, effective_channel, element_response, ris_matrix, ris_output_power, sinr,
    sum_rate, user_rates, watts_to_dbm, Architecture, ChannelSet, Precoder, RisProfile, Side,
    SolveReport, Strategy, SystemConfig, TimeSwitching, C64,
};
pub use optimizer::{
    alternating_optimize, exhaustive_oracle, optimize_precoder, optimize_profile,
    two_timescale_optimize, EnsembleReport, OracleResult, ProfileMethod, SolverOptions,
    rate_gradient,
};
