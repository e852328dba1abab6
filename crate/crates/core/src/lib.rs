//! Compactly supported generalized integral kernel operators.
//!
//! The crate realizes, numerically, integral operators whose kernels are
//! ε-parameterized nets of smooth functions with compact support:
//!
//! - [`asymptotics`]: growth classification of scalar ε-nets
//!   (moderate, logarithmic, negligible up to an order).
//! - [`quadrature`]: boxes and tensor Gauss-Legendre / midpoint rules.
//! - [`genfun`]: generalized functions, sampled seminorms, mollifier
//!   embeddings of deltas and smooth data.
//! - [`kernelop`]: kernels, operator application, composition, powers,
//!   support checks, Nyström matrices, kernel reconstruction by probing.
//! - [`expm`]: the operator exponential `Id + Ŝ` with `S = Σ L_n / n!`,
//!   truncated by an explicit tail bound, and checks of its functional
//!   equations.
//! - [`kerndsl`]: the expression language used to write kernels.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod asymptotics;
pub mod error;
pub mod expm;
pub mod genfun;
pub mod kerndsl;
pub mod kernelop;
pub mod quadrature;

pub use asymptotics::{ClassifyOptions, EpsilonGrid, GrowthClass, Verdict};
pub use error::{Error, Result};
pub use genfun::{EmbedData, GeneralizedFunction, SeminormSpec};
pub use kernelop::{CompactKernel, NystromMatrix};
pub use quadrature::{Cuboid, QuadratureRule, RuleKind};
