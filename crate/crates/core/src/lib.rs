//! Software stack for a small autonomous go-kart.
//!
//! - [`localization`]: GNSS/IMU fusion with an EKF over a unicycle model.
//! - [`track`]: centerline splines, min-curvature racelines, velocity profiles.
//! - [`control`]: adaptive pure pursuit with PD steering.
//! - [`perception`]: grass segmentation, bird's-eye warp and depth scans.
//! - [`planning`]: follow-the-gap on depth scans.
//! - [`drivebus`]: CAN frames, mode arbitration and ECU models.
//! - [`sim`]: vehicle, sensors, synthetic camera and the closed loop.
//!
//! The numeric modules are generic over [`scalar::Real`]; the aliases below
//! fix them to `f64`.

pub mod config;
pub mod control;
pub mod drivebus;
pub mod io;
pub mod linalg;
pub mod localization;
pub mod perception;
pub mod planning;
pub mod scalar;
pub mod sim;
pub mod track;

pub use scalar::Real;

pub type GeoFix = localization::GeoFix<f64>;
pub type LocalPoint = localization::LocalPoint<f64>;
pub type ImuReading = localization::ImuReading<f64>;
pub type MotionInput = localization::MotionInput<f64>;
pub type EkfParams = localization::EkfParams<f64>;
pub type EkfState = localization::EkfState<f64>;
pub type Mat3 = linalg::Mat3<f64>;

pub type Track = track::Track<f64>;
pub type CenterlinePoint = track::CenterlinePoint<f64>;
pub type Spline2 = track::Spline2<f64>;
pub type AlphaVector = track::AlphaVector<f64>;
pub type VehicleLimits = track::VehicleLimits<f64>;
pub type Waypoint = track::Waypoint<f64>;
pub type Raceline = track::Raceline<f64>;
pub type OptimizerOptions = track::OptimizerOptions<f64>;

pub type PursuitParams = control::PursuitParams<f64>;
pub type PursuitState = control::PursuitState<f64>;
pub type PursuitCommand = control::PursuitCommand<f64>;
pub type VehiclePose = control::VehiclePose<f64>;

pub type DepthScan = planning::DepthScan<f64>;
pub type FtgParams = planning::FtgParams<f64>;
pub type FtgCommand = planning::FtgCommand<f64>;
