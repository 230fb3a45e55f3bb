//! Report-derived constraint losses for 3D tumor substructure segmentation.

pub mod components;
pub mod grid;
pub mod report;
pub mod vgr;
pub mod loss;
pub mod phantom;
pub mod fitter;
