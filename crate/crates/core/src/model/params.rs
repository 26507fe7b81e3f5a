use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::ArchSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One named parameter array.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Ordered collection of parameter arrays. Also used for gradients and
/// optimizer buffers, which share the layout of the parameters they track.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    tensors: Vec<ParamTensor<T>>,
}

/// Indices of one block's tensors inside a [`ParamSet`].
#[derive(Clone, Copy, Debug)]
pub(crate) struct BlockSlots {
    pub weight: usize,
    pub bias: usize,
    pub norm: Option<(usize, usize)>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new(tensors: Vec<ParamTensor<T>>) -> Self {
        Self { tensors }
    }

    pub fn tensors(&self) -> &[ParamTensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub(crate) fn data(&self, slot: usize) -> &[T] {
        &self.tensors[slot].data
    }

    pub(crate) fn data_mut(&mut self, slot: usize) -> &mut [T] {
        &mut self.tensors[slot].data
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Same names and shapes, every value zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: vec![T::zero(); t.data.len()],
                })
                .collect(),
        }
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape && a.data.len() == b.data.len())
    }

    pub fn check_layout(&self, other: &Self) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::shape("parameter collections have different layouts"))
        }
    }

    pub fn iter_values(&self) -> impl Iterator<Item = &T> {
        self.tensors.iter().flat_map(|t| t.data.iter())
    }

    pub fn iter_values_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.tensors.iter_mut().flat_map(|t| t.data.iter_mut())
    }

    pub fn all_finite(&self) -> bool {
        self.iter_values().all(|v| v.is_finite())
    }

    /// Name of the first tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors
            .iter()
            .find(|t| t.data.iter().any(|v| !v.is_finite()))
            .map(|t| t.name.as_str())
    }

    /// `self += alpha · other` (layouts must agree).
    pub fn add_scaled(&mut self, other: &Self, alpha: T) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += alpha * y;
            }
        }
    }

    pub fn scale(&mut self, alpha: T) {
        for v in self.iter_values_mut() {
            *v *= alpha;
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

fn enc_prefix(i: usize) -> String {
    format!("encoder.{i}")
}

fn dec_prefix(i: usize) -> String {
    format!("decoder.{i}")
}

/// Number of decoder blocks equals encoder blocks; decoder block `j` undoes
/// encoder block `blocks - 1 - j`.
pub(crate) fn decoder_mirror(arch: &ArchSpec, j: usize) -> usize {
    arch.blocks() - 1 - j
}

/// Tensor layout and slot table for an architecture, with every value zero.
pub(crate) fn layout<T: Scalar>(arch: &ArchSpec) -> (ParamSet<T>, Vec<BlockSlots>, Vec<BlockSlots>) {
    let mut tensors = Vec::new();
    let mut push = |name: String, shape: Vec<usize>| {
        let len = shape.iter().product();
        tensors.push(ParamTensor {
            name,
            shape,
            data: vec![T::zero(); len],
        });
        tensors.len() - 1
    };
    let mut enc = Vec::new();
    for i in 0..arch.blocks() {
        let (cin, cout) = (arch.in_channels(i), arch.widths[i]);
        let k = ArchSpec::kernel(arch.strides[i]);
        let p = enc_prefix(i);
        let weight = push(format!("{p}.conv.weight"), vec![cout, cin, k, k]);
        let bias = push(format!("{p}.conv.bias"), vec![cout]);
        let scale = push(format!("{p}.norm.scale"), vec![cout]);
        let shift = push(format!("{p}.norm.shift"), vec![cout]);
        enc.push(BlockSlots {
            weight,
            bias,
            norm: Some((scale, shift)),
        });
    }
    let mut dec = Vec::new();
    for j in 0..arch.blocks() {
        let i = decoder_mirror(arch, j);
        // transposed conv: widths[i] -> in_channels(i)
        let (cin, cout) = (arch.widths[i], arch.in_channels(i));
        let k = ArchSpec::kernel(arch.strides[i]);
        let p = dec_prefix(j);
        let weight = push(format!("{p}.deconv.weight"), vec![cin, cout, k, k]);
        let bias = push(format!("{p}.deconv.bias"), vec![cout]);
        let norm = if i == 0 {
            None
        } else {
            let scale = push(format!("{p}.norm.scale"), vec![cout]);
            let shift = push(format!("{p}.norm.shift"), vec![cout]);
            Some((scale, shift))
        };
        dec.push(BlockSlots { weight, bias, norm });
    }
    (ParamSet { tensors }, enc, dec)
}

/// Uniform fan-in initialization: convolution weights and their biases are
/// drawn from `U(-1/√fan_in, 1/√fan_in)`; normalization scales start at one
/// and shifts at zero. Values are drawn in `f64` so both precisions see the
/// same stream.
pub(crate) fn init_parameters<T: Scalar>(arch: &ArchSpec, seed: u64) -> ParamSet<T> {
    let (mut params, _, _) = layout::<T>(arch);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x1417);
    // Every bias directly follows its weight in the layout.
    let mut fan_in = 1usize;
    for t in params.tensors_mut() {
        if t.name.ends_with(".norm.scale") {
            t.data.iter_mut().for_each(|v| *v = T::one());
            continue;
        }
        if t.name.ends_with(".norm.shift") {
            continue;
        }
        if t.shape.len() == 4 {
            // [out, in, k, k] for conv, [in, out, k, k] for transposed conv;
            // both count dim 1 as fan-in.
            fan_in = t.shape[1] * t.shape[2] * t.shape[3];
        }
        let bound = 1.0 / (fan_in as f64).sqrt();
        for v in t.data.iter_mut() {
            *v = T::lit(rng.gen_range(-bound..bound));
        }
    }
    params
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_names_and_shapes() {
        let arch = ArchSpec::new(8, 1, vec![4, 6], vec![2, 2]).unwrap();
        let (p, enc, dec) = layout::<f64>(&arch);
        assert_eq!(enc.len(), 2);
        assert_eq!(dec.len(), 2);
        assert_eq!(p.get("encoder.0.conv.weight").unwrap().shape, vec![4, 1, 4, 4]);
        assert_eq!(p.get("decoder.0.deconv.weight").unwrap().shape, vec![6, 4, 4, 4]);
        assert_eq!(p.get("decoder.1.deconv.weight").unwrap().shape, vec![4, 1, 4, 4]);
        assert!(p.get("decoder.1.norm.scale").is_none());
        assert!(dec[1].norm.is_none());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let arch = ArchSpec::new(8, 1, vec![4, 6], vec![2, 2]).unwrap();
        let a = init_parameters::<f64>(&arch, 3);
        let b = init_parameters::<f64>(&arch, 3);
        let c = init_parameters::<f64>(&arch, 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let w = a.get("encoder.1.conv.weight").unwrap();
        let bound = 1.0 / ((4 * 16) as f64).sqrt();
        assert!(w.data.iter().all(|v| v.abs() <= bound));
        let bias = a.get("encoder.1.conv.bias").unwrap();
        assert!(bias.data.iter().all(|v| v.abs() <= bound));
        assert!(a.get("encoder.0.norm.scale").unwrap().data.iter().all(|&v| v == 1.0));
    }
}
