//! Sampled time series of norms, moments and bound envelopes.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormSeries {
    pub times: Vec<f64>,
    /// `norms[order][sample]`, unweighted `L^2(dx dv)`.
    pub norms: Vec<Vec<f64>>,
    /// `weighted_norms[order][sample]`, `L^2(M dx dv)` with the collision weight.
    pub weighted_norms: Vec<Vec<f64>>,
    /// x-integrated weighted mass, momentum and energy of the order-0 field.
    pub moments: Vec<[f64; 3]>,
    pub envelopes: BTreeMap<String, Vec<f64>>,
    /// Further named per-sample diagnostics.
    pub aux: BTreeMap<String, Vec<f64>>,
}

impl NormSeries {
    pub fn new(n_orders: usize) -> Self {
        Self {
            norms: vec![Vec::new(); n_orders],
            weighted_norms: vec![Vec::new(); n_orders],
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_orders(&self) -> usize {
        self.norms.len()
    }

    pub fn push_aux(&mut self, name: &str, value: f64) {
        self.aux.entry(name.to_string()).or_default().push(value);
    }

    /// Registers an envelope evaluated at every recorded time.
    pub fn add_envelope(&mut self, name: &str, bound: impl Fn(f64) -> f64) {
        let values = self.times.iter().map(|&t| bound(t)).collect();
        self.envelopes.insert(name.to_string(), values);
    }

    pub fn norm(&self, order: usize) -> Option<&[f64]> {
        self.norms.get(order).map(Vec::as_slice)
    }

    /// Writes the CSV schema `time, norm_order0..N, mass, momentum, energy,
    /// envelope_*, aux_*`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        header.extend((0..self.n_orders()).map(|k| format!("norm_order{k}")));
        header.extend(["mass", "momentum", "energy"].map(String::from));
        header.extend(self.envelopes.keys().map(|k| format!("envelope_{k}")));
        header.extend(self.aux.keys().map(|k| format!("aux_{k}")));
        w.write_record(&header).map_err(csv_error)?;
        for s in 0..self.len() {
            let mut row = vec![fmt(self.times[s])];
            for k in 0..self.n_orders() {
                row.push(fmt(self.norms[k][s]));
            }
            let m = self.moments.get(s).copied().unwrap_or([f64::NAN; 3]);
            row.extend(m.iter().map(|&x| fmt(x)));
            for v in self.envelopes.values() {
                row.push(fmt(v[s]));
            }
            for v in self.aux.values() {
                row.push(fmt(v.get(s).copied().unwrap_or(f64::NAN)));
            }
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("sample times are not strictly increasing".into()));
        }
        for (k, n) in self.norms.iter().enumerate() {
            if n.len() != self.len() || n.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::InvalidArgument(format!("norm series of order {k} is invalid")));
            }
        }
        Ok(())
    }
}

/// Round-trip exact scientific notation used in every CSV artifact.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}
