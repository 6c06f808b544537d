//! Modified hyperKähler moment map flow on triangulated flat 4-tori.
//!
//! The pipeline: build a Kuhn triangulation of `V/Γ` ([`mesh`]), represent
//! locally constant `V`-valued 1-forms per cell ([`forms`]), evaluate the
//! moment maps and the functional `φ = ½‖𝝁‖²` ([`moment`]), integrate the
//! projected gradient flow ([`flow`]) and turn limits back into polyhedral
//! maps ([`rebuild`]).

pub mod cli;
pub mod flow;
pub mod forms;
pub mod linalg;
pub mod mesh;
pub mod moment;
pub mod quatgeom;
pub mod rebuild;
