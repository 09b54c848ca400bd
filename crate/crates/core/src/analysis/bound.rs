use std::collections::BTreeMap;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// Constants of the average-gradient-norm bound. Per-layer arrays are
/// indexed `0..L`; `j_sq` entries past the split layer are ignored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundParams {
    pub beta: f64,
    pub eta: f64,
    pub clients: usize,
    pub agg_interval: u32,
    pub rounds: u32,
    pub layers: usize,
    pub split: usize,
    pub rho_f: f64,
    /// Initial optimality gap `F(w_1) − F(w*)`.
    pub theta: f64,
    pub sigma_sq: Vec<f64>,
    pub g_sq: Vec<f64>,
    pub w_sq: Vec<f64>,
    pub j_sq: Vec<f64>,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::input("beta must be positive"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0 / (2.0 * self.beta)) {
            return Err(Error::input(format!(
                "step size hypothesis 0 < eta <= 1/(2 beta) violated: eta = {}, 1/(2 beta) = {}",
                self.eta,
                1.0 / (2.0 * self.beta)
            )));
        }
        if self.clients == 0 || self.agg_interval == 0 || self.rounds == 0 {
            return Err(Error::input("K, I and T must be positive"));
        }
        if self.layers < 2 || self.split == 0 || self.split >= self.layers {
            return Err(Error::input(format!(
                "need 1 <= L_c < L, got L_c = {} and L = {}",
                self.split, self.layers
            )));
        }
        if !(0.0..1.0).contains(&self.rho_f) {
            return Err(Error::input("rho_f must lie in [0, 1)"));
        }
        if !(self.theta >= 0.0) {
            return Err(Error::input("theta must be nonnegative"));
        }
        for (name, arr) in [
            ("sigma_sq", &self.sigma_sq),
            ("G_sq", &self.g_sq),
            ("W_sq", &self.w_sq),
            ("J_sq", &self.j_sq),
        ] {
            if arr.len() != self.layers {
                return Err(Error::input(format!(
                    "{name} has {} entries, expected L = {}",
                    arr.len(),
                    self.layers
                )));
            }
            if arr.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::input(format!("{name} entries must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Right-hand side of the bound on `(1/T) Σ_t E‖∇F(w_t)‖²`.
pub fn theorem1_rhs(p: &BoundParams) -> Result<f64> {
    p.validate()?;
    let (beta, eta) = (p.beta, p.eta);
    let k = p.clients as f64;
    let i = p.agg_interval as f64;
    let b2 = 4.0 * beta * beta + 1.0;

    let mut rhs = 2.0 * p.theta / (eta * p.rounds as f64);
    for l in 0..p.layers {
        rhs += beta * eta / k * p.sigma_sq[l] + p.g_sq[l] / eta + 4.0 * b2 / eta * p.w_sq[l];
    }
    let agg = b2 * (8.0 * eta * eta * (i + 1.0) * (i + 1.0) + 1.0) / eta;
    let prune = p.rho_f * (4.0 * k * beta * beta + k + beta) / (k * eta);
    for l in 0..p.split {
        rhs += beta * eta / k * p.sigma_sq[l]
            + agg * p.g_sq[l]
            + prune * p.w_sq[l]
            + 4.0 / eta * p.j_sq[l];
    }
    Ok(rhs)
}

/// Quantization error constant `(Δ_g / (2^q − 1))²` with
/// `Δ_g = √(M/4)·(g_max − g_min)`.
pub fn quantizer_j(q: u32, g_min: f64, g_max: f64, m: usize) -> Result<f64> {
    if q == 0 || q > 62 {
        return Err(Error::input(format!("quantizer bits {q} not in [1, 62]")));
    }
    if !(g_max >= g_min) {
        return Err(Error::input("g_max must be >= g_min"));
    }
    if m == 0 {
        return Err(Error::input("dimension must be at least 1"));
    }
    let delta = (m as f64 / 4.0).sqrt() * (g_max - g_min);
    let r = delta / ((1u64 << q) - 1) as f64;
    Ok(r * r)
}

/// Per-layer gradient ranges from which `J_l²` is derived for a bit width.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantProbe {
    pub q: u32,
    pub g_min: Vec<f64>,
    pub g_max: Vec<f64>,
    pub dims: Vec<usize>,
}

impl QuantProbe {
    pub fn j_sq(&self, q: u32) -> Result<Vec<f64>> {
        (0..self.dims.len())
            .map(|l| quantizer_j(q, self.g_min[l], self.g_max[l], self.dims[l]))
            .collect()
    }
}

/// Contents of a bound parameter file.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundFile {
    pub params: BoundParams,
    pub quant: Option<QuantProbe>,
}

/// Forward differences of the bound in each knob. `None` when the knob
/// cannot be stepped (e.g. `L_c + 1 = L`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sensitivity {
    pub rhs: f64,
    pub d_interval: f64,
    pub d_rho_f: f64,
    pub d_split: Option<f64>,
    pub d_bits: Option<f64>,
}

pub const RHO_STEP: f64 = 0.01;

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{}`", v.trim())))
}

fn parse_vec<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|x| parse_value(key, x)).collect()
}

impl BoundFile {
    /// Flat `key = value` format. Keys: beta, eta, K, I, T, L, L_c, rho_f,
    /// theta, sigma_sq, G_sq, W_sq (lists of length L) and either J_sq or
    /// q + grad_min + grad_max + grad_dim.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(line, format!("line {} is not `key = value`", n + 1)))?;
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::config(k.trim(), "given more than once"));
            }
        }
        const KNOWN: &[&str] = &[
            "beta", "eta", "K", "I", "T", "L", "L_c", "rho_f", "theta", "sigma_sq", "G_sq", "W_sq",
            "J_sq", "q", "grad_min", "grad_max", "grad_dim",
        ];
        if let Some(k) = kv.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::config(k.clone(), "unknown key"));
        }
        let get = |k: &str| {
            kv.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::config(k, "missing"))
        };
        let layers: usize = parse_value("L", get("L")?)?;
        let quant = if kv.contains_key("q") {
            if kv.contains_key("J_sq") {
                return Err(Error::config("J_sq", "give either J_sq or q with gradient ranges, not both"));
            }
            Some(QuantProbe {
                q: parse_value("q", get("q")?)?,
                g_min: parse_vec("grad_min", get("grad_min")?)?,
                g_max: parse_vec("grad_max", get("grad_max")?)?,
                dims: parse_vec("grad_dim", get("grad_dim")?)?,
            })
        } else {
            None
        };
        let j_sq = match &quant {
            Some(probe) => {
                for (name, n) in [
                    ("grad_min", probe.g_min.len()),
                    ("grad_max", probe.g_max.len()),
                    ("grad_dim", probe.dims.len()),
                ] {
                    if n != layers {
                        return Err(Error::config(name, format!("expected {layers} entries, got {n}")));
                    }
                }
                probe.j_sq(probe.q).map_err(|e| Error::config("q", e.to_string()))?
            }
            None => parse_vec("J_sq", get("J_sq")?)?,
        };
        let params = BoundParams {
            beta: parse_value("beta", get("beta")?)?,
            eta: parse_value("eta", get("eta")?)?,
            clients: parse_value("K", get("K")?)?,
            agg_interval: parse_value("I", get("I")?)?,
            rounds: parse_value("T", get("T")?)?,
            layers,
            split: parse_value("L_c", get("L_c")?)?,
            rho_f: parse_value("rho_f", get("rho_f")?)?,
            theta: parse_value("theta", get("theta")?)?,
            sigma_sq: parse_vec("sigma_sq", get("sigma_sq")?)?,
            g_sq: parse_vec("G_sq", get("G_sq")?)?,
            w_sq: parse_vec("W_sq", get("W_sq")?)?,
            j_sq,
        };
        params.validate()?;
        Ok(Self { params, quant })
    }

    pub fn rhs(&self) -> Result<f64> {
        theorem1_rhs(&self.params)
    }

    /// Bound with a different bit width (requires gradient ranges).
    pub fn rhs_with_bits(&self, q: u32) -> Result<Option<f64>> {
        let Some(probe) = &self.quant else {
            return Ok(None);
        };
        let mut p = self.params.clone();
        p.j_sq = probe.j_sq(q)?;
        theorem1_rhs(&p).map(Some)
    }

    pub fn sensitivity(&self) -> Result<Sensitivity> {
        let base = self.rhs()?;
        let step = |f: &dyn Fn(&mut BoundParams)| -> Result<f64> {
            let mut p = self.params.clone();
            f(&mut p);
            Ok(theorem1_rhs(&p)? - base)
        };
        let d_interval = step(&|p| p.agg_interval += 1)?;
        let d_rho_f = if self.params.rho_f + RHO_STEP < 1.0 {
            step(&|p| p.rho_f += RHO_STEP)?
        } else {
            -step(&|p| p.rho_f -= RHO_STEP)?
        };
        let d_split = if self.params.split + 1 < self.params.layers {
            Some(step(&|p| p.split += 1)?)
        } else {
            None
        };
        let d_bits = match &self.quant {
            Some(probe) if probe.q < 62 => {
                match (self.rhs_with_bits(probe.q)?, self.rhs_with_bits(probe.q + 1)?) {
                    (Some(lo), Some(hi)) => Some(hi - lo),
                    _ => None,
                }
            }
            _ => None,
        };
        Ok(Sensitivity {
            rhs: base,
            d_interval,
            d_rho_f,
            d_split,
            d_bits,
        })
    }
}
