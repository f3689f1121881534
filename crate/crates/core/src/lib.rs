pub mod datapath;
pub mod gtpu;
pub mod harness;
pub mod probe;
pub mod seeding;
pub mod stats;
pub mod traffic;
