//! Browser bindings for three interactive views: an activation formula
//! plotted over `x` at fixed `m` and `c`, ChannelProp through one layer,
//! and a missingness mask injected into synthetic data.
//!
//! The bindings are thin wrappers over plain functions so the logic is
//! testable natively.

use trichannel::data::synthetic::extreme_count_dataset;
use trichannel::missingness::{inject, Mechanism, MissingnessSpec};
use trichannel::network::channelprop;
use trichannel::numeric::{Matrix, RngStream};
use trichannel::tree::{ActivationTree, Channel};
use wasm_bindgen::prelude::*;

const CHANNELPROP_EPSILON: f64 = 1e-8;

/// A parsed formula with its summary.
pub struct FormulaSummary {
    pub tree: ActivationTree,
    pub infix: String,
    pub size: usize,
    pub depth: usize,
    pub channels: String,
}

pub fn summarize(formula: &str) -> Result<FormulaSummary, String> {
    let tree: ActivationTree = formula.parse().map_err(|e| format!("{e}"))?;
    let s = tree.stats();
    let channels = [(Channel::X, "x"), (Channel::M, "m"), (Channel::C, "c")]
        .iter()
        .filter(|(ch, _)| tree.references(*ch))
        .map(|(_, n)| *n)
        .collect::<Vec<_>>()
        .join(" ");
    Ok(FormulaSummary {
        infix: tree.to_infix(),
        size: s.size,
        depth: s.depth,
        channels,
        tree,
    })
}

/// `n` samples of `f(x, m, c)` for `x` evenly spaced over `[lo, hi]`.
pub fn curve(formula: &str, m: f64, c: f64, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, String> {
    let tree = summarize(formula)?.tree;
    let n = n.max(2);
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    tree.eval(&xs, &vec![m; n], &vec![c; n]).map_err(|e| e.to_string())
}

/// One ChannelProp step for a single sample. `weights` is `out × in`,
/// row-major. Returns `m_out` followed by `c_out`.
pub fn propagate(weights: &[f64], outputs: usize, m: &[f64], c: &[f64]) -> Result<Vec<f64>, String> {
    let inputs = m.len();
    let w = Matrix::from_vec(outputs, inputs, weights.to_vec()).map_err(|e| e.to_string())?;
    let m = Matrix::from_vec(1, inputs, m.to_vec()).map_err(|e| e.to_string())?;
    let c = Matrix::from_vec(1, c.len(), c.to_vec()).map_err(|e| e.to_string())?;
    let (m_out, c_out) = channelprop(&w, &m, &c, CHANNELPROP_EPSILON).map_err(|e| e.to_string())?;
    Ok(m_out.into_vec().into_iter().chain(c_out.into_vec()).collect())
}

/// Row-major 0/1 mask injected into a standard-normal table, with the
/// realized rate as the final element.
pub fn injection_mask(mechanism: &str, rate: f64, seed: u64, rows: usize, cols: usize) -> Result<Vec<f64>, String> {
    let mechanism: Mechanism = mechanism.parse().map_err(|e| format!("{e}"))?;
    let raw = extreme_count_dataset(rows, cols, 1, &mut RngStream::new(seed).derive("table"));
    let spec = MissingnessSpec::new(mechanism, rate, seed);
    let (masked, report) = inject(&raw, &spec).map_err(|e| e.to_string())?;
    let mut out: Vec<f64> = masked
        .cells()
        .iter()
        .flat_map(|row| row.iter().map(|cell| if cell.is_missing() { 1.0 } else { 0.0 }))
        .collect();
    out.push(report.realized_rate());
    Ok(out)
}

#[wasm_bindgen]
pub fn formula_info(formula: &str) -> Result<String, JsError> {
    let s = summarize(formula).map_err(|e| JsError::new(&e))?;
    Ok(format!(
        "{}\nnodes {}, depth {}, channels: {}",
        s.infix,
        s.size,
        s.depth,
        if s.channels.is_empty() { "none" } else { &s.channels }
    ))
}

#[wasm_bindgen]
pub fn formula_curve(formula: &str, m: f64, c: f64, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, JsError> {
    curve(formula, m, c, lo, hi, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn channelprop_step(weights: &[f64], outputs: usize, m: &[f64], c: &[f64]) -> Result<Vec<f64>, JsError> {
    propagate(weights, outputs, m, c).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn injection_preview(mechanism: &str, rate: f64, seed: u32, rows: usize, cols: usize) -> Result<Vec<f64>, JsError> {
    injection_mask(mechanism, rate, u64::from(seed), rows, cols).map_err(|e| JsError::new(&e))
}
