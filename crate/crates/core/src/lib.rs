//! Gromov-Wasserstein machinery for finite and spherical metric-measure spaces.
//!
//! The crate is organised bottom-up:
//!
//! - [`lambda`], [`space`], [`coupling`], [`distortion`]: the Λ_q metric family,
//!   finite mm-spaces, couplings and the (p,q)-distortion functional.
//! - [`special`], [`sphere`]: Gamma / incomplete-beta helpers, Gauss-Legendre
//!   quadrature and the closed-form layer for spheres (distance distributions,
//!   p-diameters, the exact (4,2) value between Euclidean spheres).
//! - [`bounds`]: Wasserstein distance on (R+, Λ_q) and the DLB / SLB / TLB hierarchy.
//! - [`ot`], [`gw`]: exact linear OT, log-domain Sinkhorn and the GW solvers.
//! - [`sampling`]: sphere samplers, farthest point sampling, Voronoi weights and
//!   the equatorial map.

pub mod bounds;
pub mod coupling;
pub mod distortion;
mod error;
pub mod gw;
pub mod lambda;
pub mod ot;
pub mod sampling;
pub mod space;
pub mod special;
pub mod sphere;

pub use bounds::{
    dlb, hierarchy_report, slb, tlb, wasserstein_1d_lambda_q, Discrete1D, DistanceDistribution,
    HierarchyReport, MmSpace,
};
pub use coupling::{validate_coupling, Coupling, CouplingReport};
pub use distortion::{
    cross_correlation, dis42_via_inner_products, distortion_pq, distortion_pq_reference,
    p_diameter, CrossCorrelation,
};
pub use error::{Error, Result};
pub use gw::{gw_bruteforce_small, gw_cgd, gw_entropic, multistart, GwSolveParams, Init, SolverReport};
pub use lambda::{lambda_q, PqParams};
pub use ot::{linear_ot, sinkhorn_log};
pub use sampling::{PointCloud, Seed};
pub use space::{FiniteMMSpace, MetricKind};
pub use sphere::{QuadratureConfig, SphereSpec};
