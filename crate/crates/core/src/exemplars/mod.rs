//! Closed-form worked examples.

pub mod dutchbook;
pub mod threebox;
pub mod twoslit;

pub use dutchbook::{dutch_book_gains, BetSpec, Gains};
pub use threebox::{three_box_model, three_box_table, ThreeBox, ThreeBoxTable};
pub use twoslit::TwoSlitConfig;
