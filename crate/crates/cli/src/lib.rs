//! Library half of the `vecrisk` command: experiment configs, sweeps, and
//! their on-disk artifacts.

// `!(x > 0.0)` is used deliberately so NaN lands on the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;

use std::io::{Read, Write};

use vecrisk::agent::read_checkpoint;
use vecrisk::channel::StateIndex;

pub use config::{Cell, ExperimentConfig, Violation};
pub use experiment::{execute, preflight, prepare_and_execute, Extras, Report};

/// Writes `vue,state,p_fetch,p_offload,preferred` for every table row of a
/// checkpoint.
pub fn inspect_policy<R: Read, W: Write>(checkpoint: R, out: W) -> anyhow::Result<()> {
    let tables = read_checkpoint(checkpoint)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["vue", "state", "p_fetch", "p_offload", "preferred"])?;
    for (vue, t) in tables.iter().enumerate() {
        for state in 0..t.states() {
            let row = t.policy_row(StateIndex(state as u32));
            let preferred = if row[1] >= row[0] { "offload" } else { "fetch" };
            w.write_record([
                vue.to_string(),
                state.to_string(),
                experiment::fmt_f64(row[0]),
                experiment::fmt_f64(row[1]),
                preferred.to_owned(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
