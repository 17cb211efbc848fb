pub mod arborescence;
pub mod cli;
pub mod cim;
pub mod conllu;
pub mod crh;
pub mod edges;
pub mod eval;
pub mod model;
pub mod synth;

#[cfg(test)]
pub(crate) mod testutil;
