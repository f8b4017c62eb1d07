//! Named-variable field tensors and the derived detector inputs.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GridGeometry;
use crate::volume::Volume;

pub const STANDARD_GRAVITY: f64 = 9.80665;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("missing variable `{0}`")]
    MissingVariable(Variable),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(Variable),
    #[error("unknown variable name `{0}`")]
    UnknownVariable(String),
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error("non-finite value in `{0}`")]
    NonFinite(Variable),
    #[error("standard deviation for `{0}` must be positive")]
    NonPositiveStd(Variable),
}

/// Physical variables understood by the laboratory.
///
/// The first six are raw forecast variables; `wind10`, `thickness` and
/// `elevation` form the detector-input layout; `mask`, `label` and `prob`
/// tag single-variable files holding detector masks, soft labels and
/// surrogate probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Msl,
    U10,
    V10,
    Z300,
    Z500,
    SurfaceGeopotential,
    Wind10,
    Thickness,
    Elevation,
    Mask,
    Label,
    Prob,
}

impl Variable {
    pub const ALL: [Variable; 12] = [
        Variable::Msl,
        Variable::U10,
        Variable::V10,
        Variable::Z300,
        Variable::Z500,
        Variable::SurfaceGeopotential,
        Variable::Wind10,
        Variable::Thickness,
        Variable::Elevation,
        Variable::Mask,
        Variable::Label,
        Variable::Prob,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Msl => "msl",
            Variable::U10 => "u10",
            Variable::V10 => "v10",
            Variable::Z300 => "z300",
            Variable::Z500 => "z500",
            Variable::SurfaceGeopotential => "surface_geopotential",
            Variable::Wind10 => "wind10",
            Variable::Thickness => "thickness",
            Variable::Elevation => "elevation",
            Variable::Mask => "mask",
            Variable::Label => "label",
            Variable::Prob => "prob",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, FieldError> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.name() == name)
            .ok_or_else(|| FieldError::UnknownVariable(name.into()))
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `(T, d, rows, cols)` tensor of named variables on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSequence {
    geometry: GridGeometry,
    times: usize,
    variables: Vec<Variable>,
    data: Vec<f64>,
}

impl FieldSequence {
    pub fn new(
        geometry: GridGeometry,
        times: usize,
        variables: Vec<Variable>,
        data: Vec<f64>,
    ) -> Result<Self, FieldError> {
        if times == 0 {
            return Err(FieldError::Shape("at least one time step required"));
        }
        for (k, v) in variables.iter().enumerate() {
            if variables[..k].contains(v) {
                return Err(FieldError::DuplicateVariable(*v));
            }
        }
        if data.len() != times * variables.len() * geometry.cells() {
            return Err(FieldError::Shape("data length does not match T x d x r x c"));
        }
        let plane = geometry.cells();
        for (k, chunk) in data.chunks(plane).enumerate() {
            if chunk.iter().any(|x| !x.is_finite()) {
                return Err(FieldError::NonFinite(variables[k % variables.len()]));
            }
        }
        Ok(Self {
            geometry,
            times,
            variables,
            data,
        })
    }

    pub fn zeros(geometry: GridGeometry, times: usize, variables: Vec<Variable>) -> Self {
        let n = times * variables.len() * geometry.cells();
        Self::new(geometry, times, variables, vec![0.0; n]).expect("valid zero field")
    }

    /// Single-variable sequence holding a volume (masks, labels).
    pub fn from_volume(
        geometry: GridGeometry,
        variable: Variable,
        v: &Volume,
    ) -> Result<Self, FieldError> {
        if v.rows != geometry.rows || v.cols != geometry.cols {
            return Err(FieldError::Shape("volume does not match grid"));
        }
        Self::new(geometry, v.times, vec![variable], v.data.clone())
    }

    /// First variable as a volume.
    pub fn to_volume(&self) -> Volume {
        self.variable_volume(0)
    }

    pub fn variable_volume(&self, k: usize) -> Volume {
        let mut out = Volume::zeros(self.times, self.geometry.rows, self.geometry.cols);
        for t in 0..self.times {
            out.plane_mut(t).copy_from_slice(self.plane(t, k));
        }
        out
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn times(&self) -> usize {
        self.times
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn index_of(&self, v: Variable) -> Option<usize> {
        self.variables.iter().position(|&x| x == v)
    }

    fn plane_range(&self, t: usize, k: usize) -> core::ops::Range<usize> {
        let n = self.geometry.cells();
        let start = (t * self.variables.len() + k) * n;
        start..start + n
    }

    pub fn plane(&self, t: usize, k: usize) -> &[f64] {
        &self.data[self.plane_range(t, k)]
    }

    pub fn plane_mut(&mut self, t: usize, k: usize) -> &mut [f64] {
        let r = self.plane_range(t, k);
        &mut self.data[r]
    }

    /// Plane of a named variable at time `t`.
    pub fn var(&self, t: usize, v: Variable) -> Result<&[f64], FieldError> {
        let k = self.index_of(v).ok_or(FieldError::MissingVariable(v))?;
        Ok(self.plane(t, k))
    }

    pub fn same_shape(&self, other: &FieldSequence) -> bool {
        self.geometry == other.geometry
            && self.times == other.times
            && self.variables == other.variables
    }

    /// Checks finiteness again after in-place edits.
    pub fn validate(&self) -> Result<(), FieldError> {
        let plane = self.geometry.cells();
        for (k, chunk) in self.data.chunks(plane).enumerate() {
            if chunk.iter().any(|x| !x.is_finite()) {
                return Err(FieldError::NonFinite(self.variables[k % self.variables.len()]));
            }
        }
        Ok(())
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Detector inputs in a fixed channel order: msl, wind10, thickness,
/// elevation.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorInputs(FieldSequence);

impl DetectorInputs {
    pub const LAYOUT: [Variable; 4] = [
        Variable::Msl,
        Variable::Wind10,
        Variable::Thickness,
        Variable::Elevation,
    ];
    pub const MSL: usize = 0;
    pub const WIND: usize = 1;
    pub const THICKNESS: usize = 2;
    pub const ELEVATION: usize = 3;
    pub const CHANNELS: usize = 4;

    /// Wraps a sequence already in detector layout.
    pub fn new(f: FieldSequence) -> Result<Self, FieldError> {
        if f.variables() != Self::LAYOUT {
            return Err(FieldError::Shape(
                "detector inputs must be [msl, wind10, thickness, elevation]",
            ));
        }
        Ok(Self(f))
    }

    /// Uses the detector-layout variables when present, otherwise derives
    /// them from raw forecast variables.
    pub fn from_fields(f: &FieldSequence, gravity: f64) -> Result<Self, FieldError> {
        if Self::LAYOUT.iter().all(|v| f.index_of(*v).is_some()) {
            let mut out = FieldSequence::zeros(*f.geometry(), f.times(), Self::LAYOUT.to_vec());
            for t in 0..f.times() {
                for (k, v) in Self::LAYOUT.iter().enumerate() {
                    out.plane_mut(t, k).copy_from_slice(f.var(t, *v)?);
                }
            }
            Ok(Self(out))
        } else {
            derive_inputs(f, gravity)
        }
    }

    pub fn fields(&self) -> &FieldSequence {
        &self.0
    }

    pub fn into_fields(self) -> FieldSequence {
        self.0
    }

    pub fn geometry(&self) -> &GridGeometry {
        self.0.geometry()
    }

    pub fn times(&self) -> usize {
        self.0.times()
    }

    pub fn channel(&self, t: usize, k: usize) -> &[f64] {
        self.0.plane(t, k)
    }

    pub fn channel_mut(&mut self, t: usize, k: usize) -> &mut [f64] {
        self.0.plane_mut(t, k)
    }

    pub fn msl(&self, t: usize) -> &[f64] {
        self.channel(t, Self::MSL)
    }

    pub fn wind(&self, t: usize) -> &[f64] {
        self.channel(t, Self::WIND)
    }

    pub fn thickness(&self, t: usize) -> &[f64] {
        self.channel(t, Self::THICKNESS)
    }

    pub fn elevation(&self, t: usize) -> &[f64] {
        self.channel(t, Self::ELEVATION)
    }

    /// Snapshot at time `t`, channel-major `(4, rows, cols)`.
    pub fn snapshot(&self, t: usize) -> &[f64] {
        let n = Self::CHANNELS * self.geometry().cells();
        &self.0.data()[t * n..(t + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        self.0.data_mut()
    }

    /// Clamps wind speed at zero; perturbed standardized winds can map to
    /// small negative speeds.
    pub fn clamp_wind(&mut self) {
        for t in 0..self.times() {
            for w in self.channel_mut(t, Self::WIND) {
                if *w < 0.0 {
                    *w = 0.0;
                }
            }
        }
    }
}

/// Derives detector inputs from raw forecast variables.
pub fn derive_inputs(f: &FieldSequence, gravity: f64) -> Result<DetectorInputs, FieldError> {
    let need = [
        Variable::Msl,
        Variable::U10,
        Variable::V10,
        Variable::Z300,
        Variable::Z500,
        Variable::SurfaceGeopotential,
    ];
    for v in need {
        if f.index_of(v).is_none() {
            return Err(FieldError::MissingVariable(v));
        }
    }
    let mut out = FieldSequence::zeros(*f.geometry(), f.times(), DetectorInputs::LAYOUT.to_vec());
    for t in 0..f.times() {
        let msl = f.var(t, Variable::Msl)?;
        let u = f.var(t, Variable::U10)?;
        let v = f.var(t, Variable::V10)?;
        let z3 = f.var(t, Variable::Z300)?;
        let z5 = f.var(t, Variable::Z500)?;
        let sg = f.var(t, Variable::SurfaceGeopotential)?;
        out.plane_mut(t, DetectorInputs::MSL).copy_from_slice(msl);
        for (o, (a, b)) in out
            .plane_mut(t, DetectorInputs::WIND)
            .iter_mut()
            .zip(u.iter().zip(v))
        {
            *o = (a * a + b * b).sqrt();
        }
        for (o, (a, b)) in out
            .plane_mut(t, DetectorInputs::THICKNESS)
            .iter_mut()
            .zip(z3.iter().zip(z5))
        {
            *o = a - b;
        }
        for (o, g) in out
            .plane_mut(t, DetectorInputs::ELEVATION)
            .iter_mut()
            .zip(sg)
        {
            *o = g / gravity;
        }
    }
    Ok(DetectorInputs(out))
}

/// Per-variable mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub variables: Vec<Variable>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizationStats {
    pub fn new(variables: Vec<Variable>, mean: Vec<f64>, std: Vec<f64>) -> Result<Self, FieldError> {
        if variables.len() != mean.len() || variables.len() != std.len() {
            return Err(FieldError::Shape("one mean and std per variable"));
        }
        for (v, s) in variables.iter().zip(&std) {
            if !(s.is_finite() && *s > 0.0) {
                return Err(FieldError::NonPositiveStd(*v));
            }
        }
        Ok(Self {
            variables,
            mean,
            std,
        })
    }

    /// Pooled statistics over several sequences with the same variables.
    /// Standard deviations below `std_floor` are replaced by 1, so constant
    /// channels (flat terrain) pass through centred but unscaled.
    pub fn compute(seqs: &[&FieldSequence], std_floor: f64) -> Result<Self, FieldError> {
        let first = seqs.first().ok_or(FieldError::Shape("no data"))?;
        let vars = first.variables().to_vec();
        let d = vars.len();
        let mut sum = vec![0.0; d];
        let mut count = vec![0usize; d];
        for s in seqs {
            if s.variables() != vars.as_slice() {
                return Err(FieldError::Shape("variable lists differ"));
            }
            for t in 0..s.times() {
                for k in 0..d {
                    sum[k] += s.plane(t, k).iter().sum::<f64>();
                    count[k] += s.plane(t, k).len();
                }
            }
        }
        let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, n)| s / *n as f64).collect();
        let mut ss = vec![0.0; d];
        for s in seqs {
            for t in 0..s.times() {
                for k in 0..d {
                    ss[k] += s.plane(t, k).iter().map(|x| (x - mean[k]).powi(2)).sum::<f64>();
                }
            }
        }
        let std = ss
            .iter()
            .zip(&count)
            .map(|(s, n)| {
                let sd = (s / *n as f64).sqrt();
                if sd < std_floor {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Self::new(vars, mean, std)
    }

    fn lookup(&self, v: Variable) -> Result<(f64, f64), FieldError> {
        let k = self
            .variables
            .iter()
            .position(|&x| x == v)
            .ok_or(FieldError::MissingVariable(v))?;
        if !(self.std[k] > 0.0) {
            return Err(FieldError::NonPositiveStd(v));
        }
        Ok((self.mean[k], self.std[k]))
    }

    pub fn std_of(&self, v: Variable) -> Result<f64, FieldError> {
        self.lookup(v).map(|x| x.1)
    }
}

fn affine(
    f: &FieldSequence,
    s: &StandardizationStats,
    op: impl Fn(f64, f64, f64) -> f64,
) -> Result<FieldSequence, FieldError> {
    let params: Vec<(f64, f64)> = f
        .variables()
        .iter()
        .map(|v| s.lookup(*v))
        .collect::<Result<_, _>>()?;
    let mut out = f.clone();
    for t in 0..f.times() {
        for (k, (m, sd)) in params.iter().enumerate() {
            for x in out.plane_mut(t, k) {
                *x = op(*x, *m, *sd);
            }
        }
    }
    Ok(out)
}

/// `(x - mean) / std` per variable.
pub fn standardize(f: &FieldSequence, s: &StandardizationStats) -> Result<FieldSequence, FieldError> {
    affine(f, s, |x, m, sd| (x - m) / sd)
}

/// Inverse of [`standardize`].
pub fn destandardize(
    f: &FieldSequence,
    s: &StandardizationStats,
) -> Result<FieldSequence, FieldError> {
    affine(f, s, |x, m, sd| x * sd + m)
}

pub fn standardize_inputs(
    x: &DetectorInputs,
    s: &StandardizationStats,
) -> Result<DetectorInputs, FieldError> {
    Ok(DetectorInputs(standardize(x.fields(), s)?))
}

pub fn destandardize_inputs(
    x: &DetectorInputs,
    s: &StandardizationStats,
) -> Result<DetectorInputs, FieldError> {
    Ok(DetectorInputs(destandardize(x.fields(), s)?))
}

/// Carries a perturbation of the detector inputs (physical units, detector
/// layout) back onto the sequence it was derived from.
///
/// Detector-layout sequences get the deltas added directly. Raw sequences
/// take the msl delta on `msl`, the thickness delta on `z300`, and the wind
/// delta as a rescaling of `(u10, v10)`, so re-deriving the inputs
/// reproduces the perturbed ones (with wind clamped at zero). The elevation
/// delta is ignored.
pub fn apply_input_perturbation(
    original: &FieldSequence,
    delta: &DetectorInputs,
) -> Result<FieldSequence, FieldError> {
    if delta.geometry() != original.geometry() || delta.times() != original.times() {
        return Err(FieldError::Shape("perturbation does not match field"));
    }
    let mut out = original.clone();
    let in_layout = DetectorInputs::LAYOUT
        .iter()
        .all(|v| original.index_of(*v).is_some());
    for t in 0..original.times() {
        let msl_k = out.index_of(Variable::Msl).ok_or(FieldError::MissingVariable(Variable::Msl))?;
        for (x, d) in out.plane_mut(t, msl_k).iter_mut().zip(delta.msl(t)) {
            *x += d;
        }
        if in_layout {
            let wk = out.index_of(Variable::Wind10).unwrap();
            for (x, d) in out.plane_mut(t, wk).iter_mut().zip(delta.wind(t)) {
                *x += d;
            }
            let tk = out.index_of(Variable::Thickness).unwrap();
            for (x, d) in out.plane_mut(t, tk).iter_mut().zip(delta.thickness(t)) {
                *x += d;
            }
        } else {
            let zk = out.index_of(Variable::Z300).ok_or(FieldError::MissingVariable(Variable::Z300))?;
            for (x, d) in out.plane_mut(t, zk).iter_mut().zip(delta.thickness(t)) {
                *x += d;
            }
            let uk = out.index_of(Variable::U10).ok_or(FieldError::MissingVariable(Variable::U10))?;
            let vk = out.index_of(Variable::V10).ok_or(FieldError::MissingVariable(Variable::V10))?;
            let n = original.geometry().cells();
            let u0 = original.plane(t, uk).to_vec();
            let v0 = original.plane(t, vk).to_vec();
            let mut u1 = vec![0.0; n];
            let mut v1 = vec![0.0; n];
            for c in 0..n {
                let dw = delta.wind(t)[c];
                let w = (u0[c] * u0[c] + v0[c] * v0[c]).sqrt();
                if dw == 0.0 {
                    u1[c] = u0[c];
                    v1[c] = v0[c];
                } else if w > 0.0 {
                    let f = (w + dw).max(0.0) / w;
                    u1[c] = u0[c] * f;
                    v1[c] = v0[c] * f;
                } else {
                    v1[c] = dw.max(0.0);
                }
            }
            out.plane_mut(t, uk).copy_from_slice(&u1);
            out.plane_mut(t, vk).copy_from_slice(&v1);
        }
    }
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridGeometry {
        GridGeometry::new(3, 4, 0.0, 10.0, 1.0).unwrap()
    }

    fn raw_constant(vals: [f64; 6]) -> FieldSequence {
        let vars = alloc::vec![
            Variable::Msl,
            Variable::U10,
            Variable::V10,
            Variable::Z300,
            Variable::Z500,
            Variable::SurfaceGeopotential,
        ];
        let mut data = Vec::new();
        for _t in 0..2 {
            for v in vals {
                data.extend(core::iter::repeat_n(v, 12));
            }
        }
        FieldSequence::new(grid(), 2, vars, data).unwrap()
    }

    #[test]
    fn derive_three_four_five() {
        let f = raw_constant([101000.0, 3.0, 4.0, 90000.0, 90000.0, 980.665]);
        let d = derive_inputs(&f, STANDARD_GRAVITY).unwrap();
        for t in 0..2 {
            assert!(d.wind(t).iter().all(|&w| w == 5.0));
            assert!(d.thickness(t).iter().all(|&x| x == 0.0));
            assert!(d.elevation(t).iter().all(|&e| (e - 100.0).abs() < 1e-12));
            assert!(d.msl(t).iter().all(|&p| p == 101000.0));
        }
    }

    #[test]
    fn derive_reports_missing_variable() {
        let f = FieldSequence::zeros(grid(), 1, alloc::vec![Variable::Msl, Variable::U10]);
        assert_eq!(
            derive_inputs(&f, STANDARD_GRAVITY),
            Err(FieldError::MissingVariable(Variable::V10))
        );
    }

    #[test]
    fn derive_ignores_variable_order() {
        let a = raw_constant([100500.0, 1.0, -2.0, 95000.0, 55000.0, 50.0]);
        let mut vars = a.variables().to_vec();
        vars.reverse();
        let mut data = Vec::new();
        for t in 0..a.times() {
            for v in &vars {
                data.extend_from_slice(a.var(t, *v).unwrap());
            }
        }
        let b = FieldSequence::new(*a.geometry(), a.times(), vars, data).unwrap();
        assert_eq!(
            derive_inputs(&a, STANDARD_GRAVITY).unwrap(),
            derive_inputs(&b, STANDARD_GRAVITY).unwrap()
        );
    }

    #[test]
    fn rejects_duplicates_and_non_finite() {
        let g = grid();
        assert!(matches!(
            FieldSequence::new(g, 1, alloc::vec![Variable::Msl, Variable::Msl], alloc::vec![0.0; 24]),
            Err(FieldError::DuplicateVariable(Variable::Msl))
        ));
        let mut data = alloc::vec![0.0; 12];
        data[5] = f64::NAN;
        assert!(matches!(
            FieldSequence::new(g, 1, alloc::vec![Variable::Msl], data),
            Err(FieldError::NonFinite(Variable::Msl))
        ));
    }

    #[test]
    fn standardize_formula_and_errors() {
        let f = FieldSequence::new(grid(), 1, alloc::vec![Variable::Msl], alloc::vec![4.0; 12]).unwrap();
        let s = StandardizationStats::new(alloc::vec![Variable::Msl], alloc::vec![0.0], alloc::vec![2.0]).unwrap();
        assert!(standardize(&f, &s).unwrap().data().iter().all(|&x| x == 2.0));
        let s = StandardizationStats::new(alloc::vec![Variable::Msl], alloc::vec![4.0], alloc::vec![2.0]).unwrap();
        assert!(standardize(&f, &s).unwrap().data().iter().all(|&x| x == 0.0));
        assert!(StandardizationStats::new(alloc::vec![Variable::Msl], alloc::vec![0.0], alloc::vec![0.0]).is_err());
        let other = StandardizationStats::new(alloc::vec![Variable::U10], alloc::vec![0.0], alloc::vec![1.0]).unwrap();
        assert_eq!(
            standardize(&f, &other),
            Err(FieldError::MissingVariable(Variable::Msl))
        );
    }

    #[test]
    fn raw_perturbation_rederives() {
        let f = raw_constant([101000.0, 3.0, 4.0, 95000.0, 55000.0, 0.0]);
        let mut delta = DetectorInputs::new(FieldSequence::zeros(
            *f.geometry(),
            f.times(),
            DetectorInputs::LAYOUT.to_vec(),
        ))
        .unwrap();
        delta.channel_mut(1, DetectorInputs::MSL)[3] = -250.0;
        delta.channel_mut(1, DetectorInputs::WIND)[3] = 5.0;
        delta.channel_mut(0, DetectorInputs::WIND)[4] = -9.0;
        delta.channel_mut(0, DetectorInputs::THICKNESS)[7] = 60.0;
        let out = apply_input_perturbation(&f, &delta).unwrap();
        let d0 = derive_inputs(&f, STANDARD_GRAVITY).unwrap();
        let d1 = derive_inputs(&out, STANDARD_GRAVITY).unwrap();
        assert_eq!(d1.msl(1)[3], d0.msl(1)[3] - 250.0);
        assert!((d1.wind(1)[3] - 10.0).abs() < 1e-12);
        assert_eq!(d1.wind(0)[4], 0.0);
        assert_eq!(d1.thickness(0)[7], d0.thickness(0)[7] + 60.0);
        assert_eq!(d1.wind(0)[0], 5.0);
    }
}
