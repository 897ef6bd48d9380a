//! Enhanced velocity mixed finite elements for single-phase Darcy flow on
//! non-matching multiblock rectangular grids, with recovery of the interface
//! velocity from a locally post-processed pressure.

pub mod case;
pub mod config;
pub mod coupling;
pub mod darcy;
pub mod dofs;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod output;
pub mod postprocess;
pub mod verification;

pub use case::{ManufacturedCase, PermField};
pub use darcy::{MixedSolution, MixedSystem};
pub use dofs::{enumerate_dofs, DofMap};
pub use error::{Error, Result};
pub use mesh::{build_multiblock, checkerboard, compute_interface_trace, BlockSpec, InterfaceMesh, MultiblockMesh};
