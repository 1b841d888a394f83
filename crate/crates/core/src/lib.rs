pub mod frame;
pub mod io;
pub mod lattice;
pub mod operator;
pub mod qha;
pub mod svd;
pub mod translates;
