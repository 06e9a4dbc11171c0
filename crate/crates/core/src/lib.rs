//! Continuous-time and triggered gradient tracking for consensus
//! optimization, with numerical Lyapunov certificates.

pub mod certify;
pub mod cgt;
pub mod costs;
pub mod dataset;
pub mod dgt;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod monitor;
pub mod ode;
pub mod robust;
pub mod scalar;
pub mod stacked;
pub mod trace;
pub mod trigger;

pub use certify::{Certificate, CertificateReport, LyapunovProbe};
pub use cgt::{run_cgt, run_cgt_from};
pub use costs::{CostOracle, Problem};
pub use dataset::Dataset;
pub use dgt::{run_dgt, DgtForm};
pub use error::{Error, Result};
pub use graph::{Graph, GraphJson, LaplacianSet};
pub use ode::{IntegratorConfig, Method};
pub use robust::{iss_sweep, IssReport, IssVariant, NoiseKind, NoiseSpec};
pub use scalar::Real;
pub use trace::{DecayFit, Trace, TraceRow};
pub use trigger::{async_run, sync_run, AsyncParams, EventKind, EventLog, Schedule, Simulation, TriggerLaw};

pub type Graph64 = Graph<f64>;
pub type Graph32 = Graph<f32>;
pub type Problem64 = Problem<f64>;
pub type Problem32 = Problem<f32>;
pub type Laplacian64 = LaplacianSet<f64>;
pub type Certificate64 = Certificate<f64>;
pub type Certificate32 = Certificate<f32>;
pub type IntegratorConfig64 = IntegratorConfig<f64>;
