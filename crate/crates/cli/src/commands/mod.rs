pub mod crf;
pub mod degrade;
pub mod evaluate;
pub mod generate;
pub mod postprocess;
pub mod report;
pub mod segment;
pub mod train;
