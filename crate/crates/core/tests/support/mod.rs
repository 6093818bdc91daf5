pub mod forge_cases;
pub mod video;
