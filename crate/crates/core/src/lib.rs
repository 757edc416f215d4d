pub mod numcore;
pub mod geometry;
pub mod correspondence;
pub mod initiator;
pub mod eval;
pub mod dgat;
pub mod losses;
pub mod refine;
