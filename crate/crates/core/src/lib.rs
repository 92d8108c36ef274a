//! Stateless model checking of a small shared-memory language by
//! observation-equivalence classes.
//!
//! The crate is layered bottom-up:
//!
//! * [`model`] holds the static program: processes, CFGs, events, program
//!   structure, and the communication graph.
//! * [`lang`] parses the `.cmp` text format, compiles it to a [`model::Program`],
//!   renders programs back to text, and generates the bundled benchmarks.
//! * [`exec`] is a sequentially consistent interpreter producing [`exec::Trace`]s,
//!   observation functions, and happens-before relations.
//! * [`annot`] implements positive/negative annotations, the annotation value
//!   function, and basis computation.
//! * [`solve`] realizes a positive annotation as a trace through a 2SAT encoding.
//! * [`explore`] is the data-centric DPOR search, including the cyclic variant.
//! * [`oracle`] provides brute-force enumeration, class partitions, and a
//!   sleep-set baseline.

pub mod annot;
pub mod exec;
pub mod explore;
pub mod lang;
pub mod model;
pub mod oracle;
pub mod solve;

pub use exec::Trace;
pub use model::{EventId, Program};
