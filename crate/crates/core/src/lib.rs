//! Protection of probabilistic classifiers against distribution shift.
//!
//! Two views of the same construction:
//!
//! * [`martingale`] bets against a base forecaster with the Simple and
//!   Composite Jumper test martingales; large values are evidence that the
//!   base forecasts have gone wrong.
//! * [`predictor`] turns the same mixture into protected forecasts whose
//!   log loss is never more than `ln 1/π` worse than the base and which
//!   track the best calibrator sequence when the base degrades.
//!
//! [`bounds`] evaluates the regret guarantees, [`loss`] and [`metrics`]
//! do the accounting, and [`stream`], [`synth`] and [`experiment`] handle
//! data and experiment orchestration.
//!
//! ```
//! use jumper::{CalibratorFamily, CompositeJumper, Forecast, JumperConfig, Predictor};
//!
//! let config = JumperConfig::with_default_rates(CalibratorFamily::default_binary());
//! let mut test = CompositeJumper::new(config.clone())?;
//! let mut predictor = Predictor::new(&config)?;
//! for (p, y) in [(0.2, 0), (0.7, 1), (0.4, 1)] {
//!     let p = Forecast::binary(p)?;
//!     let protected = predictor.predict(&p)?.protected;
//!     predictor.update(&p, y)?;
//!     test.step(&p, y)?;
//!     assert!(protected.prob_of(y) > 0.0);
//! }
//! assert!(test.ln_value() >= 0.5f64.ln());
//! # Ok::<(), jumper::Error>(())
//! ```

pub mod bounds;
pub mod calibration;
pub mod error;
pub mod experiment;
pub mod forecast;
pub mod loss;
pub mod martingale;
pub mod metrics;
pub mod predictor;
pub mod report;
pub mod stream;
pub mod synth;

pub use calibration::{Calibrator, CalibratorFamily, FamilyKind};
pub use error::{Error, Result};
pub use forecast::Forecast;
pub use loss::LogBase;
pub use martingale::{CompositeJumper, JumperConfig, MartingaleTrajectory, SimpleJumper};
pub use predictor::{MixingPolicy, Predictor, ProtectedPrediction};
pub use report::{ProtectedRecord, ProtectionReport};
pub use stream::{PredictionStream, Record};
