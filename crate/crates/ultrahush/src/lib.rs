//! Desk-scale simulation bench for ultrasound-delivered adversarial audio.
//!
//! The crate models the full loop of an inaudible-injection study on a desk:
//! a nonlinear ultrasonic channel oracle ([`channel`]), attacker-side channel
//! measurement and modeling ([`chanest`]), a compact CTC speech recognizer
//! ([`asr`]), perturbation crafting and physical-style evaluation
//! ([`attack`]), a defense and detection bench ([`defense`]), a synthetic
//! speech corpus ([`corpus`]), and a config-driven experiment harness
//! ([`harness`]).
//!
//! Each major capability has a runnable demo under `examples/`; the `ultrahush`
//! binary drives full-scale, reproducible experiments from plain-text configs.

pub mod asr;
pub mod attack;
mod blob;
pub mod chanest;
pub mod channel;
pub mod corpus;
pub mod defense;
pub mod error;
pub mod signal;

pub use error::{Error, Result};
