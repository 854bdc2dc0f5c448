//! Personal-sound-zone simulation and pressure-matching evaluation.
//!
//! The crate covers the numerical side of a two-zone reproduction
//! experiment:
//!
//! - [`room`]: image-source transfer functions of a shoebox room, evaluated
//!   directly in the frequency domain.
//! - [`scene`]: the loudspeaker ring, bright and dark zones, control and
//!   monitor grids, and the named control-grid masks.
//! - [`solver`]: regularized pressure matching and the search for the
//!   regularization weight that matches a target array effort.
//! - [`metrics`]: relative error, acoustic contrast and array effort.
//! - [`dataset`]: dataset generation and the PSZD binary tensor format.
//!
//! ```
//! use psz_core::room::{simulate_atf, FrequencyGrid, RoomSpec};
//! use psz_core::Point3;
//!
//! let room = RoomSpec::new([8.0, 8.0, 3.0], 0.25, 343.0)?;
//! let freqs = FrequencyGrid::uniform(16, 2000.0)?;
//! let h = simulate_atf(
//!     &room,
//!     &[Point3::new(2.0, 4.0, 1.5)],
//!     &[Point3::new(4.0, 4.0, 1.5)],
//!     &freqs,
//!     4,
//! )?;
//! assert_eq!(h.shape(), [16, 1, 1]);
//! # Ok::<(), psz_core::PszError>(())
//! ```

pub mod config;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod room;
pub mod scene;
pub mod solver;

pub use config::SceneConfig;
pub use error::{ErrorKind, PszError, Result};
pub use geometry::Point3;
