pub mod bnb;
pub mod lp;
pub mod program;
