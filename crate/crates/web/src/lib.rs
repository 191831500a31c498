//! Browser bindings. Every function returns a JSON string.

use ridgeless::kernel::KernelSpec;
use ridgeless::spectra::SpectrumModel;
use ridgeless::synthetic::{self, SyntheticConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn to_js<T: Serialize>(r: ridgeless::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[derive(Serialize)]
struct Spectrum {
    eigenvalues: Vec<f64>,
    trace_ratio: f64,
    r: f64,
}

/// Covariance eigenvalues for decay `kappa` in dimension `d`, with the
/// normalized trace and the trace-proxy regularization r.
#[wasm_bindgen]
pub fn spectrum(kappa: f64, d: usize) -> Result<String, JsError> {
    to_js(SpectrumModel::kappa(kappa, d).map(|m| Spectrum {
        eigenvalues: m.eigenvalues(),
        trace_ratio: m.trace_ratio(),
        r: m.trace_ratio().powi(2),
    }))
}

/// Interpolation test error with the normalized variance and bias bounds
/// for `points` values of kappa, log-spaced on [e^lo, e^hi].
#[wasm_bindgen]
pub fn kappa_sweep(n: usize, d: usize, lo: f64, hi: f64, points: usize, seed: u32) -> Result<String, JsError> {
    if points < 2 {
        return Err(JsError::new("need at least two grid points"));
    }
    let grid: Vec<f64> = (0..points)
        .map(|k| (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp())
        .collect();
    let model = SpectrumModel::identity(d).map_err(|e| JsError::new(&e.to_string()))?;
    let mut base = SyntheticConfig::new(n, model, seed.into());
    base.n_test = 500;
    to_js(synthetic::kappa_sweep(&base, &grid, &[(n, d)], &[seed.into()], 1))
}

/// Operator-norm distance between the exponential inner-product kernel
/// matrix and its linearization, for isotropic Gaussian data.
#[wasm_bindgen]
pub fn linearization_error(n: usize, d: usize, seed: u32) -> Result<String, JsError> {
    to_js(synthetic::linearization_check(
        &KernelSpec::exp_inner_product(),
        &[(n, d)],
        &[seed.into()],
        1,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outputs_are_json() {
        let s: serde_json::Value = serde_json::from_str(&spectrum(1.0, 10).unwrap()).unwrap();
        assert_eq!(s["eigenvalues"].as_array().unwrap().len(), 10);
        let rows: serde_json::Value = serde_json::from_str(&kappa_sweep(40, 10, -1.0, 1.0, 3, 0).unwrap()).unwrap();
        assert_eq!(rows.as_array().unwrap().len(), 3);
        let lin: serde_json::Value = serde_json::from_str(&linearization_error(20, 40, 0).unwrap()).unwrap();
        assert!(lin[0]["error"].as_f64().unwrap() >= 0.0);
    }
}
