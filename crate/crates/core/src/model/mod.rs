//! Convolutional autoencoder: forward reconstruction, per-sample loss,
//! weighted batch objective and its exact gradient.

mod arch;
mod layers;
mod params;
mod tensor;

use rayon::prelude::*;

pub use arch::{ArchSpec, DEFAULT_INPUT_SIDE, DEFAULT_STRIDES, DEFAULT_WIDTHS};
pub use params::{ParamSet, ParamTensor};
pub use tensor::{ImageTensor, LatentTensor, Tensor3};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use layers::ConvGeom;
use params::BlockSlots;

/// Samples per gradient accumulator. Fixed so the reduction order, and with
/// it every bit of the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Activation {
    Leaky,
    Sigmoid,
}

#[derive(Clone, Copy, Debug)]
struct Block {
    transposed: bool,
    cin: usize,
    cout: usize,
    geom: ConvGeom,
    slots: BlockSlots,
    act: Activation,
}

impl Block {
    fn in_side(&self) -> usize {
        if self.transposed {
            self.geom.out_side
        } else {
            self.geom.in_side
        }
    }

    fn out_side(&self) -> usize {
        if self.transposed {
            self.geom.in_side
        } else {
            self.geom.out_side
        }
    }
}

/// Mirrored convolutional autoencoder with its parameters.
#[derive(Clone, Debug)]
pub struct Cae<T> {
    arch: ArchSpec,
    params: ParamSet<T>,
    blocks: Vec<Block>,
}

/// Activations kept from one sample's forward pass.
#[derive(Clone, Debug)]
pub struct SampleForward<T> {
    input: Vec<T>,
    /// Output of every block; the last one is the reconstruction.
    outputs: Vec<Vec<T>>,
    norm_cache: Vec<Option<(Vec<T>, T)>>,
    loss: T,
}

impl<T: Scalar> SampleForward<T> {
    pub fn loss(&self) -> T {
        self.loss
    }

    pub fn reconstruction(&self) -> &[T] {
        self.outputs.last().expect("at least one block")
    }
}

/// Forward passes of a mini-batch, ready for a weighted backward pass.
#[derive(Clone, Debug)]
pub struct BatchForward<T> {
    samples: Vec<SampleForward<T>>,
}

impl<T: Scalar> BatchForward<T> {
    pub fn losses(&self) -> Vec<T> {
        self.samples.iter().map(|s| s.loss).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

impl<T: Scalar> Cae<T> {
    /// Fresh model with seeded uniform fan-in initialization.
    pub fn new(arch: ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let params = params::init_parameters(&arch, seed);
        Self::from_params(arch, params)
    }

    /// Wraps existing parameters; names, shapes and finiteness are checked.
    pub fn from_params(arch: ArchSpec, params: ParamSet<T>) -> Result<Self> {
        arch.validate()?;
        if arch.leaky_slope < 0.0 {
            return Err(Error::Config("leaky slope must be nonnegative".into()));
        }
        let (expected, enc, dec) = params::layout::<T>(&arch);
        if !expected.same_layout(&params) {
            return Err(Error::shape(
                "parameter arrays do not match the architecture descriptor",
            ));
        }
        if let Some(name) = params.first_non_finite() {
            return Err(Error::NonFinite(format!("parameter {name}")));
        }
        let sides = arch.sides()?;
        let mut blocks = Vec::with_capacity(2 * arch.blocks());
        for (i, slots) in enc.into_iter().enumerate() {
            let stride = arch.strides[i];
            blocks.push(Block {
                transposed: false,
                cin: arch.in_channels(i),
                cout: arch.widths[i],
                geom: ConvGeom::new(ArchSpec::kernel(stride), stride, 1, sides[i]),
                slots,
                act: Activation::Leaky,
            });
        }
        for (j, slots) in dec.into_iter().enumerate() {
            let i = params::decoder_mirror(&arch, j);
            let stride = arch.strides[i];
            blocks.push(Block {
                transposed: true,
                cin: arch.widths[i],
                cout: arch.in_channels(i),
                geom: ConvGeom::new(ArchSpec::kernel(stride), stride, 1, sides[i]),
                slots,
                act: if i == 0 {
                    Activation::Sigmoid
                } else {
                    Activation::Leaky
                },
            });
        }
        Ok(Self {
            arch,
            params,
            blocks,
        })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn into_params(self) -> ParamSet<T> {
        self.params
    }

    /// Mutable access for optimizers. Layout changes are not allowed and are
    /// caught by the next [`Cae::from_params`].
    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        (self.arch.input_side, self.arch.input_side, self.arch.input_channels)
    }

    fn check_input(&self, x: &ImageTensor<T>) -> Result<()> {
        if x.shape() != self.input_shape() {
            return Err(Error::shape(format!(
                "input {:?} but the architecture expects {:?}",
                x.shape(),
                self.input_shape()
            )));
        }
        Ok(())
    }

    fn run_block(&self, b: &Block, input: &[T]) -> (Vec<T>, Option<(Vec<T>, T)>) {
        let w = self.params.data(b.slots.weight);
        let bias = self.params.data(b.slots.bias);
        let mut out = if b.transposed {
            layers::deconv_forward(input, w, bias, b.cin, b.cout, b.geom)
        } else {
            layers::conv_forward(input, w, bias, b.cin, b.cout, b.geom)
        };
        let cache = b.slots.norm.map(|(scale, shift)| {
            layers::norm_forward(
                &mut out,
                self.params.data(scale),
                self.params.data(shift),
                T::lit(self.arch.norm_eps),
            )
        });
        match b.act {
            Activation::Leaky => layers::leaky_relu_in_place(&mut out, T::lit(self.arch.leaky_slope)),
            Activation::Sigmoid => layers::sigmoid_in_place(&mut out),
        }
        (out, cache)
    }

    fn run_range(&self, range: std::ops::Range<usize>, input: &[T]) -> Vec<T> {
        let mut cur = input.to_vec();
        for b in &self.blocks[range] {
            cur = self.run_block(b, &cur).0;
        }
        cur
    }

    /// Encoder pass.
    pub fn encode(&self, x: &ImageTensor<T>) -> Result<LatentTensor<T>> {
        self.check_input(x)?;
        let n = self.arch.blocks();
        let z = self.run_range(0..n, x.as_slice());
        let (h, w, c) = self.arch.latent_shape()?;
        Tensor3::from_chw(h, w, c, z)
    }

    /// Decoder pass; the output is bounded to `[0, 1]` by the final sigmoid.
    pub fn decode(&self, z: &LatentTensor<T>) -> Result<Tensor3<T>> {
        let latent = self.arch.latent_shape()?;
        if z.shape() != latent {
            return Err(Error::shape(format!(
                "latent {:?} but the architecture declares {:?}",
                z.shape(),
                latent
            )));
        }
        let n = self.arch.blocks();
        let out = self.run_range(n..2 * n, z.as_slice());
        let (h, w, c) = self.input_shape();
        Tensor3::from_chw(h, w, c, out)
    }

    /// `decode(encode(x))`.
    pub fn reconstruct(&self, x: &ImageTensor<T>) -> Result<Tensor3<T>> {
        let z = self.encode(x)?;
        self.decode(&z)
    }

    /// Reconstruction error of one sample under the current parameters.
    pub fn sample_loss(&self, x: &ImageTensor<T>) -> Result<T> {
        let xhat = self.reconstruct(x)?;
        per_sample_mse(x, &xhat)
    }

    /// Full forward pass of one sample, keeping what the backward pass needs.
    pub fn forward(&self, x: &ImageTensor<T>) -> Result<SampleForward<T>> {
        self.check_input(x)?;
        let mut outputs: Vec<Vec<T>> = Vec::with_capacity(self.blocks.len());
        let mut norm_cache = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let input = outputs.last().map(Vec::as_slice).unwrap_or(x.as_slice());
            debug_assert_eq!(input.len(), b.cin * b.in_side() * b.in_side());
            let (out, cache) = self.run_block(b, input);
            debug_assert_eq!(out.len(), b.cout * b.out_side() * b.out_side());
            outputs.push(out);
            norm_cache.push(cache);
        }
        let loss = mse_slices(x.as_slice(), outputs.last().expect("blocks"));
        Ok(SampleForward {
            input: x.as_slice().to_vec(),
            outputs,
            norm_cache,
            loss,
        })
    }

    /// Forward passes for a batch (parallel over samples, order preserved).
    pub fn forward_batch(&self, batch: &[ImageTensor<T>]) -> Result<BatchForward<T>> {
        let refs: Vec<&ImageTensor<T>> = batch.iter().collect();
        self.forward_refs(&refs)
    }

    pub fn forward_refs(&self, batch: &[&ImageTensor<T>]) -> Result<BatchForward<T>> {
        let samples = batch
            .par_iter()
            .map(|x| self.forward(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(BatchForward { samples })
    }

    /// Adds `coef · ∂L/∂params` of one sample's MSE into `grads`.
    pub fn accumulate_gradient(&self, fwd: &SampleForward<T>, coef: T, grads: &mut ParamSet<T>) {
        if coef == T::zero() {
            return;
        }
        let recon = fwd.reconstruction();
        let n = T::from_usize(recon.len()).unwrap();
        let two = T::lit(2.0);
        let mut delta: Vec<T> = recon
            .iter()
            .zip(&fwd.input)
            .map(|(&y, &x)| coef * two * (y - x) / n)
            .collect();
        let slope = T::lit(self.arch.leaky_slope);
        for (idx, b) in self.blocks.iter().enumerate().rev() {
            let out = &fwd.outputs[idx];
            match b.act {
                Activation::Leaky => layers::leaky_relu_backward(&mut delta, out, slope),
                Activation::Sigmoid => layers::sigmoid_backward(&mut delta, out),
            }
            if let (Some((scale, shift)), Some((xhat, inv_std))) = (b.slots.norm, &fwd.norm_cache[idx]) {
                let scale_vals = self.params.data(scale).to_vec();
                let mut dscale = vec![T::zero(); scale_vals.len()];
                let mut dshift = vec![T::zero(); scale_vals.len()];
                layers::norm_backward(&mut delta, xhat, *inv_std, &scale_vals, &mut dscale, &mut dshift);
                add_into(grads.data_mut(scale), &dscale);
                add_into(grads.data_mut(shift), &dshift);
            }
            let input = if idx == 0 { &fwd.input } else { &fwd.outputs[idx - 1] };
            let w = self.params.data(b.slots.weight);
            let mut dw = std::mem::take(&mut grads.tensors_mut()[b.slots.weight].data);
            let mut db = std::mem::take(&mut grads.tensors_mut()[b.slots.bias].data);
            let need_input = idx > 0;
            let dx = if b.transposed {
                layers::deconv_backward(&delta, input, w, b.cin, b.cout, b.geom, &mut dw, &mut db, need_input)
            } else {
                layers::conv_backward(&delta, input, w, b.cin, b.cout, b.geom, &mut dw, &mut db, need_input)
            };
            grads.tensors_mut()[b.slots.weight].data = dw;
            grads.tensors_mut()[b.slots.bias].data = db;
            match dx {
                Some(dx) => delta = dx,
                None => break,
            }
        }
    }

    /// Gradient of [`weighted_batch_objective`] for an evaluated batch.
    ///
    /// The weights enter only as constant coefficients. Samples with zero
    /// weight are skipped entirely.
    pub fn backward(&self, fwd: &BatchForward<T>, weights: &[T]) -> Result<ParamSet<T>> {
        check_weights(fwd.len(), weights)?;
        let batch = T::from_usize(fwd.len()).unwrap();
        let zero = self.params.zeros_like();
        let partials: Vec<ParamSet<T>> = fwd
            .samples
            .par_chunks(GRAD_CHUNK)
            .zip(weights.par_chunks(GRAD_CHUNK))
            .map(|(samples, ws)| {
                let mut acc = zero.clone();
                for (s, &w) in samples.iter().zip(ws) {
                    self.accumulate_gradient(s, w / batch, &mut acc);
                }
                acc
            })
            .collect();
        let mut grads = zero;
        for p in &partials {
            grads.add_scaled(p, T::one());
        }
        if let Some(name) = grads.first_non_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        Ok(grads)
    }

    /// Weighted objective and its parameter gradient for a batch.
    pub fn gradient(&self, batch: &[ImageTensor<T>], weights: &[T]) -> Result<(T, ParamSet<T>)> {
        let fwd = self.forward_batch(batch)?;
        let objective = weighted_batch_objective(&fwd.losses(), weights)?;
        let grads = self.backward(&fwd, weights)?;
        Ok((objective, grads))
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn mse_slices<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = T::from_usize(a.len()).unwrap();
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>() / n
}

/// Mean over all `H·W·C` elements of the squared reconstruction difference.
pub fn per_sample_mse<T: Scalar>(x: &Tensor3<T>, xhat: &Tensor3<T>) -> Result<T> {
    if x.shape() != xhat.shape() {
        return Err(Error::shape(format!(
            "mse of {:?} against {:?}",
            x.shape(),
            xhat.shape()
        )));
    }
    if x.is_empty() {
        return Err(Error::shape("mse of empty tensors"));
    }
    Ok(mse_slices(x.as_slice(), xhat.as_slice()))
}

fn check_weights<T: Scalar>(n: usize, weights: &[T]) -> Result<()> {
    if weights.len() != n {
        return Err(Error::invalid(format!(
            "{} weights for a batch of {}",
            weights.len(),
            n
        )));
    }
    if let Some(w) = weights.iter().find(|&&w| !(w >= T::zero() && w <= T::one())) {
        return Err(Error::invalid(format!("weight {w} outside [0, 1]")));
    }
    Ok(())
}

/// `Σ vᵢ·Lᵢ / batch_size`.
pub fn weighted_batch_objective<T: Scalar>(losses: &[T], weights: &[T]) -> Result<T> {
    check_weights(losses.len(), weights)?;
    if losses.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let n = T::from_usize(losses.len()).unwrap();
    Ok(losses.iter().zip(weights).map(|(&l, &v)| v * l).sum::<T>() / n)
}
