use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Softplus,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Softplus => z.softplus(),
            Activation::Identity => z,
        }
    }

    /// Derivative given the pre-activation `z` and the output `a`.
    #[inline]
    fn derivative<T: Real>(self, z: T, a: T) -> T {
        match self {
            Activation::Tanh => T::one() - a * a,
            Activation::Softplus => z.sigmoid(),
            Activation::Identity => T::one(),
        }
    }
}

/// Layer sizes and activations; the parameters live in a flat vector.
///
/// Layout per layer: weights row-major (`outputs x inputs`) then biases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl MlpShape {
    pub fn new(layer_dims: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("bad layer dims {layer_dims:?}")));
        }
        if activations.len() != layer_dims.len() - 1 {
            return Err(Error::DimensionMismatch {
                expected: layer_dims.len() - 1,
                actual: activations.len(),
            });
        }
        Ok(Self {
            layer_dims,
            activations,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.layer_dims
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Offset of layer `l`'s weights in the flat vector.
    fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.layer_dims
            .windows(2)
            .map(|w| {
                let o = acc;
                acc += w[0] * w[1] + w[1];
                o
            })
            .collect()
    }

    pub fn workspace<T: Real>(&self) -> MlpWorkspace<T> {
        MlpWorkspace {
            offsets: self.offsets(),
            pre: self.layer_dims[1..].iter().map(|&d| vec![T::zero(); d]).collect(),
            post: self.layer_dims.iter().map(|&d| vec![T::zero(); d]).collect(),
            delta: self.layer_dims.iter().map(|&d| vec![T::zero(); d]).collect(),
        }
    }

    /// Forward pass with `params`; activations are kept in `ws` for a later
    /// [`MlpShape::backward`]. Returns the output slice.
    pub fn forward<'w, T: Real>(
        &self,
        params: &[T],
        x: &[T],
        ws: &'w mut MlpWorkspace<T>,
    ) -> &'w [T] {
        debug_assert_eq!(params.len(), self.n_params());
        debug_assert_eq!(x.len(), self.input_dim());
        ws.post[0].copy_from_slice(x);
        for l in 0..self.n_layers() {
            let (nin, nout) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let w = &params[ws.offsets[l]..ws.offsets[l] + nin * nout];
            let b = &params[ws.offsets[l] + nin * nout..ws.offsets[l] + nin * nout + nout];
            let act = self.activations[l];
            let (before, after) = ws.post.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            let pre = &mut ws.pre[l];
            for o in 0..nout {
                let row = &w[o * nin..(o + 1) * nin];
                let mut z = b[o];
                for (wi, xi) in row.iter().zip(input.iter()) {
                    z += *wi * *xi;
                }
                pre[o] = z;
                out[o] = act.apply(z);
            }
        }
        &ws.post[self.n_layers()]
    }

    /// Reverse pass after [`MlpShape::forward`] on the same workspace.
    /// Accumulates `upstream^T d out / d params` into `grad_params` and writes
    /// `upstream^T d out / d x` into `grad_input`.
    pub fn backward<T: Real>(
        &self,
        params: &[T],
        ws: &mut MlpWorkspace<T>,
        upstream: &[T],
        grad_params: &mut [T],
        grad_input: &mut [T],
    ) {
        let last = self.n_layers();
        ws.delta[last].copy_from_slice(upstream);
        for l in (0..last).rev() {
            let (nin, nout) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let off = ws.offsets[l];
            let w = &params[off..off + nin * nout];
            let act = self.activations[l];
            let (lower, upper) = ws.delta.split_at_mut(l + 1);
            let dz = &mut upper[0];
            for o in 0..nout {
                dz[o] *= act.derivative(ws.pre[l][o], ws.post[l + 1][o]);
            }
            let input = &ws.post[l];
            let (gw, gb) = grad_params[off..off + nin * nout + nout].split_at_mut(nin * nout);
            for o in 0..nout {
                let d = dz[o];
                gb[o] += d;
                if d != T::zero() {
                    for (g, xi) in gw[o * nin..(o + 1) * nin].iter_mut().zip(input.iter()) {
                        *g += d * *xi;
                    }
                }
            }
            let din = &mut lower[l];
            din.iter_mut().for_each(|v| *v = T::zero());
            for o in 0..nout {
                let d = dz[o];
                if d != T::zero() {
                    for (dv, wi) in din.iter_mut().zip(&w[o * nin..(o + 1) * nin]) {
                        *dv += d * *wi;
                    }
                }
            }
        }
        grad_input.copy_from_slice(&ws.delta[0]);
    }
}

/// Per-evaluation scratch space; one per thread.
#[derive(Debug, Clone)]
pub struct MlpWorkspace<T> {
    offsets: Vec<usize>,
    pre: Vec<Vec<T>>,
    post: Vec<Vec<T>>,
    delta: Vec<Vec<T>>,
}

/// A multilayer perceptron: shape plus flat parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub shape: MlpShape,
    params: Vec<T>,
}

impl<T: Real> Mlp<T> {
    pub fn zeros(shape: MlpShape) -> Self {
        let params = vec![T::zero(); shape.n_params()];
        Self { shape, params }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(shape: MlpShape, rng: &mut SimRng) -> Self {
        let mut params = Vec::with_capacity(shape.n_params());
        for w in shape.layer_dims.windows(2) {
            let (nin, nout) = (w[0], w[1]);
            let limit = (6.0 / (nin + nout) as f64).sqrt();
            for _ in 0..nin * nout {
                let u: f64 = rng.random();
                params.push(T::lit((2.0 * u - 1.0) * limit));
            }
            params.extend(std::iter::repeat_n(T::zero(), nout));
        }
        Self { shape, params }
    }

    pub fn from_flat(shape: MlpShape, params: Vec<T>) -> Result<Self> {
        if params.len() != shape.n_params() {
            return Err(Error::DimensionMismatch {
                expected: shape.n_params(),
                actual: params.len(),
            });
        }
        Ok(Self { shape, params })
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<T> {
        self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn layer_slices(&self, l: usize) -> (&[T], &[T]) {
        let off: usize = self.shape.layer_dims[..=l]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        let (nin, nout) = (self.shape.layer_dims[l], self.shape.layer_dims[l + 1]);
        let w = &self.params[off..off + nin * nout];
        let b = &self.params[off + nin * nout..off + nin * nout + nout];
        (w, b)
    }

    /// Row-major weights of layer `l`.
    pub fn weights(&self, l: usize) -> &[T] {
        self.layer_slices(l).0
    }

    pub fn biases(&self, l: usize) -> &[T] {
        self.layer_slices(l).1
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mut ws = self.shape.workspace();
        Ok(self.shape.forward(&self.params, x, &mut ws).to_vec())
    }

    /// `(d(upstream . out)/d params, d(upstream . out)/d x)`.
    pub fn gradient(&self, x: &[T], upstream: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        self.check_input(x)?;
        if upstream.len() != self.shape.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.shape.output_dim(),
                actual: upstream.len(),
            });
        }
        let mut ws = self.shape.workspace();
        self.shape.forward(&self.params, x, &mut ws);
        let mut gp = vec![T::zero(); self.n_params()];
        let mut gx = vec![T::zero(); x.len()];
        self.shape.backward(&self.params, &mut ws, upstream, &mut gp, &mut gx);
        Ok((gp, gx))
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.shape.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.shape.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }
}

/// JSON layout for a network: dims, activation tags, row-major weights per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MlpDoc<T> {
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub weights: Vec<Vec<Vec<T>>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Real> From<&Mlp<T>> for MlpDoc<T> {
    fn from(net: &Mlp<T>) -> Self {
        let dims = &net.shape.layer_dims;
        let weights = (0..net.shape.n_layers())
            .map(|l| {
                net.weights(l)
                    .chunks_exact(dims[l])
                    .map(|row| row.to_vec())
                    .collect()
            })
            .collect();
        let biases = (0..net.shape.n_layers()).map(|l| net.biases(l).to_vec()).collect();
        Self {
            layer_dims: dims.clone(),
            activations: net.shape.activations.clone(),
            weights,
            biases,
        }
    }
}

impl<T: Real> TryFrom<MlpDoc<T>> for Mlp<T> {
    type Error = Error;

    fn try_from(doc: MlpDoc<T>) -> Result<Self> {
        let shape = MlpShape::new(doc.layer_dims, doc.activations)?;
        if doc.weights.len() != shape.n_layers() || doc.biases.len() != shape.n_layers() {
            return Err(Error::invalid("layer count mismatch in network document"));
        }
        let mut params = Vec::with_capacity(shape.n_params());
        for l in 0..shape.n_layers() {
            let (nin, nout) = (shape.layer_dims[l], shape.layer_dims[l + 1]);
            if doc.weights[l].len() != nout
                || doc.weights[l].iter().any(|r| r.len() != nin)
                || doc.biases[l].len() != nout
            {
                return Err(Error::invalid(format!("layer {l} has the wrong shape")));
            }
            for row in &doc.weights[l] {
                params.extend_from_slice(row);
            }
            params.extend_from_slice(&doc.biases[l]);
        }
        Mlp::from_flat(shape, params)
    }
}

impl<T: Real> Serialize for Mlp<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MlpDoc::from(self).serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for Mlp<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = MlpDoc::<T>::deserialize(d)?;
        Mlp::try_from(doc).map_err(serde::de::Error::custom)
    }
}
