//! Forget-and-grow laboratory: decayed experience replay, expandable
//! residual critics and a soft actor-critic loop that composes them, plus
//! harnesses for the sampling-count theorems and the training diagnostics.

pub mod replay;
pub mod agent;
pub mod diagnostics;
pub mod envs;
pub mod growth;
pub mod nn;
pub mod theory;
