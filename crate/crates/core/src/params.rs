//! Named parameter access shared by models, optimizers and checkpoints.

use crate::{Error, Result};

/// Whether weight decay applies to a tensor (not to biases or norm gains).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decay {
    Yes,
    No,
}

pub struct ParamView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
    pub decay: Decay,
}

pub struct ParamViewMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
    pub decay: Decay,
}

/// A model whose parameters can be enumerated in a fixed order.
///
/// Gradients are represented by a value of the same type, so `visit` on a
/// gradient and `visit_mut` on the model line up tensor by tensor.
pub trait Parameterized {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(ParamView<'a>));
    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(ParamViewMut<'a>));

    fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.data.len());
        n
    }

    /// Flattened copy of every parameter, in visit order.
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        self.visit(&mut |p| out.extend_from_slice(p.data));
        out
    }

    /// Overwrites every parameter from a flat vector in visit order.
    fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        let total = self.num_parameters();
        if values.len() != total {
            return Err(Error::Shape(format!(
                "{} values for {total} parameters",
                values.len()
            )));
        }
        let mut offset = 0;
        self.visit_mut(&mut |p| {
            let n = p.data.len();
            p.data.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        });
        Ok(())
    }

    /// Sets every parameter to zero.
    fn zero(&mut self) {
        self.visit_mut(&mut |p| p.data.fill(0.0));
    }
}

/// Fills `out` with the `&mut` slices of every tensor (visit order).
pub fn collect_mut<P: Parameterized + ?Sized>(model: &mut P) -> Vec<&mut [f64]> {
    let mut out = Vec::new();
    model.visit_mut(&mut |p| out.push(p.data));
    out
}

/// Names and decay flags, in visit order.
pub fn layout<P: Parameterized + ?Sized>(model: &P) -> Vec<(String, Vec<usize>, Decay)> {
    let mut out = Vec::new();
    model.visit(&mut |p| out.push((p.name, p.shape, p.decay)));
    out
}

/// Global L2 norm over all tensors.
pub fn global_norm<P: Parameterized + ?Sized>(grads: &P) -> f64 {
    let mut sq = 0.0;
    grads.visit(&mut |p| sq += p.data.iter().map(|g| g * g).sum::<f64>());
    sq.sqrt()
}

/// Order-sensitive checksum of all parameter bits.
pub fn checksum<P: Parameterized + ?Sized>(model: &P) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    model.visit(&mut |p| {
        for v in p.data {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
    });
    h
}

/// Adds `scale * src` into `dst` tensor by tensor.
pub fn add_scaled<P: Parameterized>(dst: &mut P, src: &P, scale: f64) {
    let mut sources: Vec<&[f64]> = Vec::new();
    src.visit(&mut |p| sources.push(p.data));
    let mut i = 0;
    dst.visit_mut(&mut |p| {
        for (d, s) in p.data.iter_mut().zip(sources[i]) {
            *d += scale * s;
        }
        i += 1;
    });
}

/// Visits an `ndarray` array as a parameter.
#[macro_export]
#[doc(hidden)]
macro_rules! visit_array {
    ($f:expr, $name:expr, $arr:expr, $decay:expr) => {
        $f($crate::params::ParamView {
            name: $name.to_string(),
            shape: $arr.shape().to_vec(),
            data: $arr.as_slice().expect("parameters are contiguous"),
            decay: $decay,
        })
    };
}

#[macro_export]
#[doc(hidden)]
macro_rules! visit_array_mut {
    ($f:expr, $name:expr, $arr:expr, $decay:expr) => {{
        let shape = $arr.shape().to_vec();
        $f($crate::params::ParamViewMut {
            name: $name.to_string(),
            shape,
            data: $arr.as_slice_mut().expect("parameters are contiguous"),
            decay: $decay,
        })
    }};
}
