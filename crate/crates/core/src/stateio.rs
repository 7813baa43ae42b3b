//! File formats for allocations, traces, and channel dumps.
//!
//! Allocation states round-trip through a small CSV with columns
//! `field,m,k,value` (`field` one of `tau`, `alpha`, `p`, `q`); channel
//! dumps use `link,m,index,re,im` with lowercase link letters for taps and
//! uppercase for frequency-response bins.

use std::fmt::Write as _;

use ndarray::Array2;

use crate::channel::{ChannelTapSet, FrequencyGrid};
use crate::metrics::AllocationState;
use crate::{Error, Result};

/// Serializes an allocation to the state CSV format.
pub fn state_to_csv(state: &AllocationState) -> String {
    let mut out = String::from("field,m,k,value\n");
    for (i, tau) in state.tau.iter().enumerate() {
        let _ = writeln!(out, "tau,{i},,{tau}");
    }
    for (i, alpha) in state.alpha.iter().enumerate() {
        let _ = writeln!(out, "alpha,{i},,{alpha}");
    }
    for ((i, k), p) in state.p.indexed_iter() {
        let _ = writeln!(out, "p,{i},{k},{p}");
    }
    let _ = writeln!(out, "q,,,{}", state.q);
    out
}

/// Parses the state CSV format back into an allocation.
pub fn state_from_csv(text: &str) -> Result<AllocationState> {
    let mut tau: Vec<(usize, f64)> = Vec::new();
    let mut alpha: Vec<(usize, f64)> = Vec::new();
    let mut p: Vec<(usize, usize, f64)> = Vec::new();
    let mut q = None;
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!("state line {}: expected 4 fields", lineno + 1)));
        }
        let value: f64 = fields[3]
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("state line {}: bad value: {e}", lineno + 1)))?;
        let index = |s: &str| -> Result<usize> {
            s.trim()
                .parse()
                .map_err(|e| Error::Parse(format!("state line {}: bad index: {e}", lineno + 1)))
        };
        match fields[0].trim() {
            "tau" => tau.push((index(fields[1])?, value)),
            "alpha" => alpha.push((index(fields[1])?, value)),
            "p" => p.push((index(fields[1])?, index(fields[2])?, value)),
            "q" => q = Some(value),
            other => return Err(Error::Parse(format!("state line {}: unknown field '{other}'", lineno + 1))),
        }
    }
    let m = tau.len();
    if m == 0 || alpha.len() != m {
        return Err(Error::Parse("state file must carry matching tau and alpha rows".into()));
    }
    let n = p.len() / m;
    if n == 0 || p.len() != m * n {
        return Err(Error::Parse("state file power rows do not form an m x n matrix".into()));
    }
    let mut state = AllocationState {
        tau: vec![0.0; m],
        alpha: vec![0.0; m],
        p: Array2::zeros((m, n)),
        q: q.ok_or_else(|| Error::Parse("state file is missing the q row".into()))?,
    };
    for (i, value) in tau {
        *state.tau.get_mut(i).ok_or_else(|| Error::Parse(format!("tau index {i} out of range")))? = value;
    }
    for (i, value) in alpha {
        *state.alpha.get_mut(i).ok_or_else(|| Error::Parse(format!("alpha index {i} out of range")))? = value;
    }
    for (i, k, value) in p {
        if i >= m || k >= n {
            return Err(Error::Parse(format!("power index ({i}, {k}) out of range")));
        }
        state.p[[i, k]] = value;
    }
    Ok(state)
}

/// Serializes taps and frequency bins into one channel-dump CSV.
pub fn channels_to_csv(taps: &ChannelTapSet, grid: &FrequencyGrid) -> String {
    let mut out = String::from("link,m,index,re,im\n");
    for ((i, l), c) in taps.forward.indexed_iter() {
        let _ = writeln!(out, "f,{i},{l},{},{}", c.re, c.im);
    }
    for ((i, l), c) in taps.backward.indexed_iter() {
        let _ = writeln!(out, "g,{i},{l},{},{}", c.re, c.im);
    }
    for (l, c) in taps.direct.iter().enumerate() {
        let _ = writeln!(out, "h,,{l},{},{}", c.re, c.im);
    }
    for ((i, l), c) in taps.interference.indexed_iter() {
        let _ = writeln!(out, "v,{i},{l},{},{}", c.re, c.im);
    }
    for ((i, k), c) in grid.f.indexed_iter() {
        let _ = writeln!(out, "F,{i},{k},{},{}", c.re, c.im);
    }
    for ((i, k), c) in grid.g.indexed_iter() {
        let _ = writeln!(out, "G,{i},{k},{},{}", c.re, c.im);
    }
    for (k, c) in grid.h.iter().enumerate() {
        let _ = writeln!(out, "H,,{k},{},{}", c.re, c.im);
    }
    for ((i, k), c) in grid.v.indexed_iter() {
        let _ = writeln!(out, "V,{i},{k},{},{}", c.re, c.im);
    }
    out
}
