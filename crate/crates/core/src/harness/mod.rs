//! Experiment harness: configuration, Monte Carlo orchestration, metrics.

pub mod seeding;
