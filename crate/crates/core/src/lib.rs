//! Direct rational RBF partition-of-unity approximation (DRRBF-PU).
//!
//! Functions with steep gradients or near-singular behaviour are sampled at
//! scattered nodes in the unit square. The domain is covered by overlapping
//! discs (patches); in each patch a rational RBF approximant `p/q` is fitted,
//! with the denominator's node values taken from the smallest eigenpair of a
//! generalized symmetric-definite eigenproblem. Local approximants are
//! blended with Shepard weights built from the Wendland C4 function.
//!
//! First derivatives are assembled *directly*: each local approximant is
//! differentiated analytically and the results are blended with the same
//! weights. The weights themselves are never differentiated, so no weight
//! derivative exists anywhere in this crate.
//!
//! ```no_run
//! use drrbfpu::prelude::*;
//!
//! let points = build_uniform_grid(33)?;
//! let values: Vec<f64> = points.iter().map(|p| test1_value(p[0], p[1])).collect();
//! let cover = build_patch_cover(64, 1.0)?;
//! let model = fit_global(&points, &values, &cover, &FitConfig::default())?;
//! let dfdx = model.eval([0.3, 0.4], Deriv::Dx)?;
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod bench;
pub mod cli;
pub mod fmt;
pub mod geometry;
pub mod kernels;
pub mod linalg;
pub mod localfit;
pub mod par;
pub mod pum;

pub use par::Execution;

/// A point of the plane, `[x, y]`.
pub type Point = [f64; 2];

pub mod prelude {
    pub use crate::bench::{
        convergence_order, relative_l2_error, run_convergence_study, test1_dx, test1_dy,
        test1_value, test2_dx, test2_dy, test2_value, ConvergenceRow, StudyConfig, TestFunction,
    };
    pub use crate::geometry::{
        assign_members, build_patch_cover, build_uniform_grid, covering_patches, PatchCover,
        PatchMembership, PointSet,
    };
    pub use crate::kernels::{kernel_matrix, ShapeParameter};
    pub use crate::linalg::{smallest_generalized_eigenpair, EigenPair, SymmetricMatrix};
    pub use crate::localfit::{fit_local_rational, FitConfig, LocalRationalModel};
    pub use crate::pum::{
        error_bound_report, eval_global, fit_global, shepard_weights, Deriv, GlobalModel,
    };
    pub use crate::{Execution, Point};
}
