//! Evolutionary test generation for REST APIs.
//!
//! Tests are sequences of HTTP actions with typed inputs. Three search algorithms
//! are provided: MIO, MOSA and LT-MOSA, the latter recombining tests along
//! action groups learned by a linkage tree.

pub mod api_model;
pub mod experiment;
pub mod linkage;
pub mod search;
pub mod stats;
pub mod sut;
