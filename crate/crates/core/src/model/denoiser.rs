//! A small per-cell MLP velocity field with local spatiotemporal context.
//!
//! Per latent cell the input is `[x_t, condition, time features, (frame, row, col)]`.
//! Two hidden layers of width `hidden` use SiLU; each layer after the first sees
//! its predecessor's activations concatenated with their 3×3×3 box average
//! (neighbors outside the grid are left out of the mean).

use ndarray::{concatenate, s, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LatentGeometry;
use crate::tensor::LatentTensor;

pub const DEFAULT_HIDDEN: usize = 64;
/// Number of sinusoidal time frequencies; each contributes a sine and a cosine.
pub const TIME_FREQUENCIES: usize = 4;

/// Architecture dimensions; together they fix the parameter count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserDims {
    pub frames: usize,
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub hidden: usize,
}

impl DenoiserDims {
    pub fn for_geometry(geom: &LatentGeometry, hidden: usize) -> Self {
        let [frames, rows, cols, channels] = geom.latent_shape();
        Self {
            frames,
            rows,
            cols,
            channels,
            hidden,
        }
    }

    pub fn cells(&self) -> usize {
        self.frames * self.rows * self.cols
    }

    pub fn input_width(&self) -> usize {
        2 * self.channels + 2 * TIME_FREQUENCIES + 3
    }

    fn layout(&self) -> Layout {
        let (h, i, c) = (self.hidden, self.input_width(), self.channels);
        let sizes = [h * i, h, h * 2 * h, h, c * 2 * h, c];
        let mut offsets = [0usize; 7];
        for k in 0..6 {
            offsets[k + 1] = offsets[k] + sizes[k];
        }
        Layout { offsets }
    }

    pub fn param_count(&self) -> usize {
        self.layout().offsets[6]
    }

    pub fn latent_shape(&self) -> [usize; 4] {
        [self.frames, self.rows, self.cols, self.channels]
    }
}

/// Offsets of `w1, b1, w2, b2, w3, b3` in the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    offsets: [usize; 7],
}

impl Layout {
    fn range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }
}

/// Names of the parameter blocks, in storage order.
pub const PARAM_BLOCKS: [&str; 6] = ["w1", "b1", "w2", "b2", "w3", "b3"];

/// 3×3×3 neighborhoods on the latent grid.
#[derive(Debug, Clone)]
struct Neighborhood {
    neighbors: Vec<Vec<usize>>,
}

impl Neighborhood {
    fn new(d: &DenoiserDims) -> Self {
        let idx = |f: usize, r: usize, c: usize| (f * d.rows + r) * d.cols + c;
        let span = |x: usize, n: usize| x.saturating_sub(1)..(x + 2).min(n);
        let mut neighbors = Vec::with_capacity(d.cells());
        for f in 0..d.frames {
            for r in 0..d.rows {
                for c in 0..d.cols {
                    let mut v = Vec::with_capacity(27);
                    for ff in span(f, d.frames) {
                        for rr in span(r, d.rows) {
                            for cc in span(c, d.cols) {
                                v.push(idx(ff, rr, cc));
                            }
                        }
                    }
                    neighbors.push(v);
                }
            }
        }
        Self { neighbors }
    }

    /// Box average applied independently to each sample's block of rows.
    fn average(&self, x: &Array2<f64>) -> Array2<f64> {
        let cells = self.neighbors.len();
        let mut out = Array2::zeros(x.raw_dim());
        for b in 0..x.nrows() / cells {
            let base = b * cells;
            for (i, nb) in self.neighbors.iter().enumerate() {
                let inv = 1.0 / nb.len() as f64;
                let mut row = out.row_mut(base + i);
                for &j in nb {
                    row.scaled_add(inv, &x.row(base + j));
                }
            }
        }
        out
    }

    /// Adjoint of [`Self::average`].
    fn average_adjoint(&self, g: ArrayView2<f64>) -> Array2<f64> {
        let cells = self.neighbors.len();
        let mut out = Array2::zeros(g.raw_dim());
        for b in 0..g.nrows() / cells {
            let base = b * cells;
            for (i, nb) in self.neighbors.iter().enumerate() {
                let inv = 1.0 / nb.len() as f64;
                let gi = g.row(base + i);
                for &j in nb {
                    out.row_mut(base + j).scaled_add(inv, &gi);
                }
            }
        }
        out
    }
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// Sine and cosine of `t` at frequencies `π/2 · 2^k`.
pub fn time_features(t: f64) -> [f64; 2 * TIME_FREQUENCIES] {
    let mut out = [0.0; 2 * TIME_FREQUENCIES];
    for k in 0..TIME_FREQUENCIES {
        let w = std::f64::consts::FRAC_PI_2 * (1u32 << k) as f64;
        out[2 * k] = (w * t).sin();
        out[2 * k + 1] = (w * t).cos();
    }
    out
}

/// One network evaluation request.
#[derive(Debug, Clone, Copy)]
pub struct FieldInput<'a> {
    pub x_t: &'a LatentTensor,
    pub t: f64,
    pub condition: &'a LatentTensor,
}

/// Activations kept for the backward pass.
struct Trace {
    input: Array2<f64>,
    pre1: Array2<f64>,
    z2: Array2<f64>,
    pre2: Array2<f64>,
    z3: Array2<f64>,
    output: Array2<f64>,
}

/// The toy velocity-field network and its flat parameter vector.
#[derive(Debug, Clone)]
pub struct ToyDenoiser {
    dims: DenoiserDims,
    params: Vec<f64>,
    neighborhood: Neighborhood,
}

impl PartialEq for ToyDenoiser {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.params == other.params
    }
}

impl ToyDenoiser {
    /// Scaled-Gaussian initialization (`1/√fan_in`), output layer shrunk tenfold.
    pub fn new(dims: DenoiserDims, seed: u64) -> Self {
        let layout = dims.layout();
        let mut params = vec![0.0; dims.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_in = [dims.input_width(), 2 * dims.hidden, 2 * dims.hidden];
        for (layer, &fan) in fan_in.iter().enumerate() {
            let scale = if layer == 2 { 0.1 } else { 1.0 } / (fan as f64).sqrt();
            for p in &mut params[layout.range(2 * layer)] {
                let g: f64 = StandardNormal.sample(&mut rng);
                *p = g * scale;
            }
        }
        Self::from_params(dims, params).expect("length matches layout")
    }

    pub fn from_params(dims: DenoiserDims, params: Vec<f64>) -> Result<Self> {
        if params.len() != dims.param_count() {
            return Err(Error::shape(dims.param_count(), params.len()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        Ok(Self {
            neighborhood: Neighborhood::new(&dims),
            dims,
            params,
        })
    }

    pub fn dims(&self) -> &DenoiserDims {
        &self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Parameter blocks in [`PARAM_BLOCKS`] order with their shapes.
    pub fn blocks(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let d = &self.dims;
        let layout = d.layout();
        let shapes = [
            vec![d.hidden, d.input_width()],
            vec![d.hidden],
            vec![d.hidden, 2 * d.hidden],
            vec![d.hidden],
            vec![d.channels, 2 * d.hidden],
            vec![d.channels],
        ];
        PARAM_BLOCKS
            .iter()
            .zip(shapes)
            .enumerate()
            .map(|(k, (name, shape))| (*name, shape, &self.params[layout.range(k)]))
            .collect()
    }

    fn weight(&self, k: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((rows, cols), &self.params[self.dims.layout().range(k)])
            .expect("layout sizes match")
    }

    fn bias(&self, k: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[self.dims.layout().range(k)])
    }

    fn check_input(&self, input: &FieldInput) -> Result<()> {
        let want = self.dims.latent_shape();
        for (name, t) in [("x_t", input.x_t), ("condition", input.condition)] {
            if t.shape() != want {
                return Err(Error::shape(
                    format!("{name} {want:?}"),
                    format!("{:?}", t.shape()),
                ));
            }
        }
        if !(0.0..=1.0).contains(&input.t) {
            return Err(Error::InvalidInput(format!("t = {} outside [0, 1]", input.t)));
        }
        Ok(())
    }

    fn assemble(&self, batch: &[FieldInput]) -> Result<Array2<f64>> {
        let d = &self.dims;
        let width = d.input_width();
        let cells = d.cells();
        let c = d.channels;
        let coord = |i: usize, n: usize| {
            if n > 1 {
                2.0 * i as f64 / (n - 1) as f64 - 1.0
            } else {
                0.0
            }
        };
        let mut x = Array2::zeros((batch.len() * cells, width));
        for (b, inp) in batch.iter().enumerate() {
            self.check_input(inp)?;
            let tf = time_features(inp.t);
            let (xs, cs) = (inp.x_t.as_slice(), inp.condition.as_slice());
            for cell in 0..cells {
                let f = cell / (d.rows * d.cols);
                let r = (cell / d.cols) % d.rows;
                let col = cell % d.cols;
                let mut row = x.row_mut(b * cells + cell);
                for ch in 0..c {
                    row[ch] = xs[cell * c + ch] as f64;
                    row[c + ch] = cs[cell * c + ch] as f64;
                }
                for (k, v) in tf.iter().enumerate() {
                    row[2 * c + k] = *v;
                }
                row[width - 3] = coord(f, d.frames);
                row[width - 2] = coord(r, d.rows);
                row[width - 1] = coord(col, d.cols);
            }
        }
        Ok(x)
    }

    fn run(&self, batch: &[FieldInput]) -> Result<Trace> {
        let d = &self.dims;
        let (h, iw, c) = (d.hidden, d.input_width(), d.channels);
        let input = self.assemble(batch)?;
        let pre1 = input.dot(&self.weight(0, h, iw).t()) + self.bias(1);
        let h1 = pre1.mapv(silu);
        let z2 = concatenate![Axis(1), h1, self.neighborhood.average(&h1)];
        let pre2 = z2.dot(&self.weight(2, h, 2 * h).t()) + self.bias(3);
        let h2 = pre2.mapv(silu);
        let z3 = concatenate![Axis(1), h2, self.neighborhood.average(&h2)];
        let output = z3.dot(&self.weight(4, c, 2 * h).t()) + self.bias(5);
        if output.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: 0,
                detail: "network output".into(),
            });
        }
        Ok(Trace {
            input,
            pre1,
            z2,
            pre2,
            z3,
            output,
        })
    }

    fn to_latents(&self, out: &Array2<f64>, n: usize) -> Vec<LatentTensor> {
        let cells = self.dims.cells();
        (0..n)
            .map(|b| {
                let block = out.slice(s![b * cells..(b + 1) * cells, ..]);
                let data = block.iter().map(|&v| v as f32).collect();
                LatentTensor::from_vec(self.dims.latent_shape(), data).expect("finite output")
            })
            .collect()
    }

    /// Evaluates the velocity field for each input.
    pub fn forward_batch(&self, batch: &[FieldInput]) -> Result<Vec<LatentTensor>> {
        let trace = self.run(batch)?;
        Ok(self.to_latents(&trace.output, batch.len()))
    }

    pub fn forward(&self, x_t: &LatentTensor, t: f64, condition: &LatentTensor) -> Result<LatentTensor> {
        Ok(self
            .forward_batch(&[FieldInput { x_t, t, condition }])?
            .pop()
            .expect("one output per input"))
    }

    /// Mean squared error against `targets` over every element of the batch,
    /// with its analytic gradient.
    pub fn loss_and_grad(&self, batch: &[FieldInput], targets: &[&LatentTensor]) -> Result<(f64, Vec<f64>)> {
        if batch.len() != targets.len() || batch.is_empty() {
            return Err(Error::shape(batch.len(), targets.len()));
        }
        let d = &self.dims;
        let (h, c) = (d.hidden, d.channels);
        let trace = self.run(batch)?;
        let mut target = Array2::zeros(trace.output.raw_dim());
        for (b, t) in targets.iter().enumerate() {
            if t.shape() != d.latent_shape() {
                return Err(Error::shape(
                    format!("{:?}", d.latent_shape()),
                    format!("{:?}", t.shape()),
                ));
            }
            let rows = b * d.cells()..(b + 1) * d.cells();
            let view = ArrayView2::from_shape((d.cells(), c), t.as_slice()).expect("standard layout");
            target.slice_mut(s![rows, ..]).assign(&view.mapv(|v| v as f64));
        }
        let resid = &trace.output - &target;
        let m = resid.len() as f64;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / m;
        let d_out = resid * (2.0 / m);

        let layout = d.layout();
        let mut grad = vec![0.0; d.param_count()];
        let mut put = |k: usize, g: Array2<f64>| {
            grad[layout.range(k)].copy_from_slice(g.as_standard_layout().as_slice().expect("contiguous"));
        };

        // Output layer.
        put(4, d_out.t().dot(&trace.z3));
        put(5, d_out.sum_axis(Axis(0)).insert_axis(Axis(0)));
        let d_z3 = d_out.dot(&self.weight(4, c, 2 * h));
        let d_h2 = &d_z3.slice(s![.., ..h]) + &self.neighborhood.average_adjoint(d_z3.slice(s![.., h..]));
        let d_pre2 = d_h2 * &trace.pre2.mapv(silu_grad);

        // Second hidden layer.
        put(2, d_pre2.t().dot(&trace.z2));
        put(3, d_pre2.sum_axis(Axis(0)).insert_axis(Axis(0)));
        let d_z2 = d_pre2.dot(&self.weight(2, h, 2 * h));
        let d_h1 = &d_z2.slice(s![.., ..h]) + &self.neighborhood.average_adjoint(d_z2.slice(s![.., h..]));
        let d_pre1 = d_h1 * &trace.pre1.mapv(silu_grad);

        // First hidden layer.
        put(0, d_pre1.t().dot(&trace.input));
        put(1, d_pre1.sum_axis(Axis(0)).insert_axis(Axis(0)));

        Ok((loss, grad))
    }

    /// Loss only, for finite-difference checks.
    pub fn loss(&self, batch: &[FieldInput], targets: &[&LatentTensor]) -> Result<f64> {
        let trace = self.run(batch)?;
        let c = self.dims.channels;
        let mut sum = 0.0;
        for (b, t) in targets.iter().enumerate() {
            let rows = trace
                .output
                .slice(s![b * self.dims.cells()..(b + 1) * self.dims.cells(), ..]);
            for (o, &y) in rows.iter().zip(t.as_slice()) {
                sum += (o - y as f64).powi(2);
            }
        }
        Ok(sum / (targets.len() * self.dims.cells() * c) as f64)
    }
}
