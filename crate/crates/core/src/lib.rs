//! Skeleton-sequence action recognition with a residual temporal
//! convolutional network trained under fusion knowledge distillation, plus the
//! evaluation and reasoning layers that turn its predictions into cohort bias
//! reports, risk values and risk-penalised flu diagnoses.

pub mod data;
pub mod eval;
pub mod model;
pub mod nn;
pub mod reasoning;
pub mod report;
