//! Broadcasting on trees at desk scale.
//!
//! Exact laws of the broadcast process, belief propagation, the operator
//! calculus used to study low-degree polynomial estimators of the root
//! (conditional expectations, projections onto low-degree spaces, layered
//! decompositions), variance-decay measurements and lemma-level checks.

pub mod broadcast;
pub mod chain;
pub mod error;
pub mod experiment;
pub mod functions;
pub mod inference;
pub mod linalg;
pub mod operators;
pub mod tensor;
pub mod tree;
pub mod verify;

pub use broadcast::{joint_probability, sample_labeling, steiner_marginal, Labeling, RootInit};
pub use chain::{decay_parameters, ks_parameter, markov_decay_probe, validate_chain, DecayParameters, TransitionChain};
pub use error::{Error, Result};
pub use functions::{es_degree, tensor_identify, tk_basis, to_dense, DenseFunction, EsPolynomial, LocalFunction, SubspaceBasis};
pub use inference::{bp_posterior, census_estimator, map_root, mc_correlation, RootPosterior};
pub use operators::{LinearMapMatrix, Model, OpKind};
pub use tree::{build_dary, Antichain, RootedTree};
pub use verify::CheckReport;
