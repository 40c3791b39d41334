pub mod explain;
pub mod gradcheck;
pub mod reproduce;
pub mod select;
pub mod simulate;
pub mod train;
