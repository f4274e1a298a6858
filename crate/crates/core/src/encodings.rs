//! Input encodings: sinusoidal frequency features and the multiresolution
//! hash grid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{CustomOp, Real, Tape, Tensor, Var};
use crate::error::{contract, Error, Result};

/// Sinusoidal features `sin(2^k π x)`, `cos(2^k π x)` per input component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyEncoding {
    pub num_frequencies: usize,
    pub include_input: bool,
}

impl FrequencyEncoding {
    pub fn new(num_frequencies: usize, include_input: bool) -> Self {
        Self {
            num_frequencies,
            include_input,
        }
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        input_dim * (2 * self.num_frequencies + usize::from(self.include_input))
    }

    /// Output layout: the raw input (if included), then for each component
    /// the `(sin, cos)` pairs in increasing frequency.
    pub fn encode<S: Real>(&self, x: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.output_dim(x.len())];
        self.encode_into(x, &mut out);
        out
    }

    fn encode_into<S: Real>(&self, x: &[S], out: &mut [S]) {
        let mut o = 0;
        if self.include_input {
            out[..x.len()].copy_from_slice(x);
            o = x.len();
        }
        for &xi in x {
            for k in 0..self.num_frequencies {
                let arg = S::of(std::f64::consts::PI * (1u64 << k) as f64) * xi;
                out[o] = arg.sin();
                out[o + 1] = arg.cos();
                o += 2;
            }
        }
    }

    /// Records the encoding of each row of `x` on the tape.
    pub fn apply<'a, S: Real>(&self, tape: &mut Tape<'a, S>, x: Var) -> Var {
        let input = tape.value(x);
        let (m, d) = (input.rows(), input.cols());
        let od = self.output_dim(d);
        let mut out = vec![S::zero(); m * od];
        for (row, o) in input.data().chunks_exact(d).zip(out.chunks_exact_mut(od.max(1))) {
            self.encode_into(row, o);
        }
        tape.custom(
            vec![x],
            Tensor::from_parts(vec![m, od], out),
            FrequencyOp { enc: *self },
        )
    }
}

struct FrequencyOp {
    enc: FrequencyEncoding,
}

impl<S: Real> CustomOp<S> for FrequencyOp {
    fn name(&self) -> &'static str {
        "frequency_encoding"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        needs_grad: &[bool],
    ) -> Result<Vec<Option<Tensor<S>>>> {
        if !needs_grad[0] {
            return Ok(vec![None]);
        }
        let x = inputs[0];
        let d = x.cols();
        let od = self.enc.output_dim(d);
        let mut dx = vec![S::zero(); x.numel()];
        for ((row, g), dxr) in x
            .data()
            .chunks_exact(d)
            .zip(grad.data().chunks_exact(od.max(1)))
            .zip(dx.chunks_exact_mut(d))
        {
            let mut o = 0;
            if self.enc.include_input {
                dxr.copy_from_slice(&g[..d]);
                o = d;
            }
            for (i, &xi) in row.iter().enumerate() {
                for k in 0..self.enc.num_frequencies {
                    let freq = S::of(std::f64::consts::PI * (1u64 << k) as f64);
                    let arg = freq * xi;
                    dxr[i] += freq * (g[o] * arg.cos() - g[o + 1] * arg.sin());
                    o += 2;
                }
            }
        }
        Ok(vec![Some(Tensor::from_parts(x.shape().to_vec(), dx))])
    }
}

/// Spatial-hash primes, one per axis.
pub const HASH_PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashGridConfig {
    pub levels: usize,
    /// Entries per level; must be a power of two.
    pub table_size: usize,
    pub features_per_level: usize,
    pub base_resolution: usize,
    pub per_level_scale: f64,
}

impl Default for HashGridConfig {
    fn default() -> Self {
        Self::with_finest_resolution(16, 2, 1 << 19, 16, 512)
    }
}

impl HashGridConfig {
    /// Picks the per-level scale so the last level has `finest` cells per
    /// axis.
    pub fn with_finest_resolution(
        levels: usize,
        features_per_level: usize,
        table_size: usize,
        base_resolution: usize,
        finest: usize,
    ) -> Self {
        let per_level_scale = if levels > 1 {
            ((finest as f64).ln() - (base_resolution as f64).ln()) / (levels - 1) as f64
        } else {
            std::f64::consts::LN_2
        }
        .exp();
        Self {
            levels,
            table_size,
            features_per_level,
            base_resolution,
            per_level_scale,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.levels == 0 {
            errs.push("hash_grid.levels must be >= 1".to_string());
        }
        if !self.table_size.is_power_of_two() || self.table_size > 1 << 31 {
            errs.push(format!(
                "hash_grid.table_size must be a power of two up to 2^31, got {}",
                self.table_size
            ));
        }
        if self.features_per_level == 0 {
            errs.push("hash_grid.features_per_level must be >= 1".to_string());
        }
        if self.base_resolution == 0 {
            errs.push("hash_grid.base_resolution must be >= 1".to_string());
        }
        if !(self.per_level_scale > 1.0) {
            errs.push(format!(
                "hash_grid.per_level_scale must be > 1, got {}",
                self.per_level_scale
            ));
        }
        errs
    }

    /// Cells per axis at `level`: `floor(N_min · b^level)`.
    pub fn resolution(&self, level: usize) -> usize {
        // The relative nudge keeps e.g. 16·(32^(1/15))^15 from flooring to 511.
        let r = self.base_resolution as f64 * self.per_level_scale.powi(level as i32);
        (r * (1.0 + 1e-12)).floor() as usize
    }

    pub fn output_dim(&self) -> usize {
        self.levels * self.features_per_level
    }

    fn vertex_count(&self, level: usize) -> u128 {
        let n = self.resolution(level) as u128 + 1;
        n * n * n
    }

    pub fn is_dense(&self, level: usize) -> bool {
        self.vertex_count(level) <= self.table_size as u128
    }

    /// Rows of the feature table at `level`: `min(T, (N+1)^3)`.
    pub fn entries(&self, level: usize) -> usize {
        self.vertex_count(level).min(self.table_size as u128) as usize
    }

    /// Total trainable scalars across all levels.
    pub fn parameter_count(&self) -> usize {
        (0..self.levels)
            .map(|l| self.entries(l) * self.features_per_level)
            .sum()
    }

    /// Table row for a grid vertex. Dense levels use row-major order
    /// (x fastest); hashed levels XOR the prime-scaled coordinates mod T.
    pub fn grid_index(&self, level: usize, corner: [usize; 3]) -> Result<usize> {
        if level >= self.levels {
            return Err(contract(format!("level {level} >= {}", self.levels)));
        }
        let n = self.resolution(level);
        if corner.iter().any(|&c| c > n) {
            return Err(contract(format!(
                "corner {corner:?} outside [0, {n}] at level {level}"
            )));
        }
        let meta = LevelMeta {
            resolution: n,
            dense: self.is_dense(level),
        };
        Ok(self.index_unchecked(meta, corner))
    }

    #[inline]
    fn index_unchecked(&self, meta: LevelMeta, c: [usize; 3]) -> usize {
        if meta.dense {
            let side = meta.resolution + 1;
            c[0] + side * (c[1] + side * c[2])
        } else {
            let h = (c[0] as u32).wrapping_mul(HASH_PRIMES[0])
                ^ (c[1] as u32).wrapping_mul(HASH_PRIMES[1])
                ^ (c[2] as u32).wrapping_mul(HASH_PRIMES[2]);
            (h as usize) & (self.table_size - 1)
        }
    }

    /// Fresh tables, uniform in `[-1e-4, 1e-4]`.
    pub fn init_tables<S: Real, R: Rng>(&self, rng: &mut R) -> Vec<Tensor<S>> {
        (0..self.levels)
            .map(|l| {
                let n = self.entries(l) * self.features_per_level;
                let data = (0..n).map(|_| S::of(rng.gen_range(-1e-4..=1e-4))).collect();
                Tensor::from_parts(vec![self.entries(l), self.features_per_level], data)
            })
            .collect()
    }

    fn level_meta(&self) -> Vec<LevelMeta> {
        (0..self.levels)
            .map(|l| LevelMeta {
                resolution: self.resolution(l),
                dense: self.is_dense(l),
            })
            .collect()
    }

    /// Encodes one position (clamped into the unit cube).
    pub fn encode<S: Real>(&self, x: [S; 3], tables: &[Tensor<S>]) -> Result<Vec<S>> {
        self.check_tables(tables.iter())?;
        let meta = self.level_meta();
        let f = self.features_per_level;
        let mut out = vec![S::zero(); self.output_dim()];
        for (l, m) in meta.iter().enumerate() {
            let cell = locate(x, m.resolution);
            let table = tables[l].data();
            for c in 0..8 {
                let idx = self.index_unchecked(*m, cell.corner(c));
                let w = cell.weight(c);
                for k in 0..f {
                    out[l * f + k] += w * table[idx * f + k];
                }
            }
        }
        Ok(out)
    }

    /// Trilinear weights of the 8 corners enclosing `x` at `level`.
    pub fn corner_weights<S: Real>(&self, level: usize, x: [S; 3]) -> [S; 8] {
        let cell = locate(x, self.resolution(level));
        std::array::from_fn(|c| cell.weight(c))
    }

    fn check_tables<'t, S: Real + 't>(
        &self,
        tables: impl ExactSizeIterator<Item = &'t Tensor<S>>,
    ) -> Result<()> {
        if tables.len() != self.levels {
            return Err(Error::Shape {
                op: "hash_encode",
                lhs: vec![self.levels],
                rhs: vec![tables.len()],
            });
        }
        for (l, t) in tables.enumerate() {
            let want = [self.entries(l), self.features_per_level];
            if t.shape() != want {
                return Err(Error::Shape {
                    op: "hash_encode",
                    lhs: want.to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Records the encoding of each row of `positions` (`m×3`) on the tape,
    /// with `tables` bound as one variable per level.
    pub fn apply<'a, S: Real>(
        &self,
        tape: &mut Tape<'a, S>,
        positions: Var,
        tables: &[Var],
    ) -> Result<Var> {
        self.check_tables(tables.iter().map(|v| tape.value(*v)))?;
        let pos = tape.value(positions);
        if pos.cols() != 3 || pos.shape().len() != 2 {
            return Err(Error::Shape {
                op: "hash_encode",
                lhs: pos.shape().to_vec(),
                rhs: vec![3],
            });
        }
        let m = pos.rows();
        let meta = self.level_meta();
        let f = self.features_per_level;
        let od = self.output_dim();
        let levels = self.levels;
        let mut out = vec![S::zero(); m * od];
        let mut corners = vec![0u32; m * levels * 8];
        let mut fracs = vec![[S::zero(); 3]; m * levels];
        let table_data: Vec<&[S]> = tables.iter().map(|v| tape.value(*v).data()).collect();
        for (i, p) in pos.data().chunks_exact(3).enumerate() {
            let x = [p[0], p[1], p[2]];
            for (l, lm) in meta.iter().enumerate() {
                let cell = locate(x, lm.resolution);
                fracs[i * levels + l] = cell.frac;
                let table = table_data[l];
                let o = &mut out[i * od + l * f..i * od + (l + 1) * f];
                for c in 0..8 {
                    let idx = self.index_unchecked(*lm, cell.corner(c));
                    corners[(i * levels + l) * 8 + c] = idx as u32;
                    let w = cell.weight(c);
                    for (k, ok) in o.iter_mut().enumerate() {
                        *ok += w * table[idx * f + k];
                    }
                }
            }
        }
        let mut inputs = vec![positions];
        inputs.extend_from_slice(tables);
        Ok(tape.custom(
            inputs,
            Tensor::from_parts(vec![m, od], out),
            HashEncodeOp {
                meta,
                features: f,
                corners,
                fracs,
            },
        ))
    }
}

#[derive(Clone, Copy, Debug)]
struct LevelMeta {
    resolution: usize,
    dense: bool,
}

struct Cell<S> {
    base: [usize; 3],
    frac: [S; 3],
}

impl<S: Real> Cell<S> {
    #[inline]
    fn corner(&self, c: usize) -> [usize; 3] {
        [
            self.base[0] + (c & 1),
            self.base[1] + ((c >> 1) & 1),
            self.base[2] + ((c >> 2) & 1),
        ]
    }

    #[inline]
    fn weight(&self, c: usize) -> S {
        corner_weight(&self.frac, c)
    }
}

#[inline]
fn corner_weight<S: Real>(frac: &[S; 3], c: usize) -> S {
    let mut w = S::one();
    for (d, &fr) in frac.iter().enumerate() {
        w *= if (c >> d) & 1 == 1 { fr } else { S::one() - fr };
    }
    w
}

/// Enclosing cell of `x` (clamped into `[0,1]³`) on a grid of `n` cells.
#[inline]
fn locate<S: Real>(x: [S; 3], n: usize) -> Cell<S> {
    let mut base = [0usize; 3];
    let mut frac = [S::zero(); 3];
    let ns = S::of(n as f64);
    for d in 0..3 {
        let p = x[d].max(S::zero()).min(S::one()) * ns;
        let b = (p.floor().to_usize().unwrap_or(0)).min(n.saturating_sub(1));
        base[d] = b;
        frac[d] = p - S::of(b as f64);
    }
    Cell { base, frac }
}

struct HashEncodeOp<S> {
    meta: Vec<LevelMeta>,
    features: usize,
    corners: Vec<u32>,
    fracs: Vec<[S; 3]>,
}

impl<S: Real> CustomOp<S> for HashEncodeOp<S> {
    fn name(&self) -> &'static str {
        "hash_encode"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        needs_grad: &[bool],
    ) -> Result<Vec<Option<Tensor<S>>>> {
        let levels = self.meta.len();
        let f = self.features;
        let od = levels * f;
        let pos = inputs[0];
        let m = pos.rows();
        let mut result: Vec<Option<Tensor<S>>> = Vec::with_capacity(inputs.len());

        let dpos = needs_grad[0].then(|| {
            let mut dx = vec![S::zero(); m * 3];
            for i in 0..m {
                let p = &pos.data()[i * 3..i * 3 + 3];
                let g = &grad.data()[i * od..(i + 1) * od];
                for (l, lm) in self.meta.iter().enumerate() {
                    let frac = &self.fracs[i * levels + l];
                    let table = inputs[1 + l].data();
                    let n = S::of(lm.resolution as f64);
                    let gl = &g[l * f..(l + 1) * f];
                    for c in 0..8 {
                        let idx = self.corners[(i * levels + l) * 8 + c] as usize;
                        let value: S = (0..f).map(|k| gl[k] * table[idx * f + k]).sum();
                        for d in 0..3 {
                            let inside = p[d] >= S::zero() && p[d] <= S::one();
                            if !inside {
                                continue;
                            }
                            let mut dw = if (c >> d) & 1 == 1 { S::one() } else { -S::one() };
                            for (e, &fr) in frac.iter().enumerate() {
                                if e != d {
                                    dw *= if (c >> e) & 1 == 1 { fr } else { S::one() - fr };
                                }
                            }
                            dx[i * 3 + d] += value * dw * n;
                        }
                    }
                }
            }
            Tensor::from_parts(vec![m, 3], dx)
        });
        result.push(dpos);

        for (l, table) in inputs[1..].iter().enumerate() {
            if !needs_grad[1 + l] {
                result.push(None);
                continue;
            }
            let mut dt = vec![S::zero(); table.numel()];
            for i in 0..m {
                let frac = &self.fracs[i * levels + l];
                let gl = &grad.data()[i * od + l * f..i * od + (l + 1) * f];
                for c in 0..8 {
                    let idx = self.corners[(i * levels + l) * 8 + c] as usize;
                    let w = corner_weight(frac, c);
                    for k in 0..f {
                        dt[idx * f + k] += w * gl[k];
                    }
                }
            }
            result.push(Some(Tensor::from_parts(table.shape().to_vec(), dt)));
        }
        Ok(result)
    }
}
