//! Math word problem synthesis and evaluation pipeline.
//!
//! The crate implements the dataset side of an iterative-learning recipe:
//! agent-based expansion of seed word problems, teacher/student solution
//! generation and grading, preference-pair construction with synthetic
//! negatives, SFT/DPO/KTO training-file emission, benchmark contamination
//! checking, and pass@1 reporting. Model training itself is out of scope;
//! everything the training consumes is produced and audited here.

pub mod agentgen;
pub mod backend;
pub mod contam;
pub mod corpus;
pub mod grader;
pub mod pipeline;
pub mod prefbuild;
pub mod report;
