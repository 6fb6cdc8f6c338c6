//! Dense tanh networks with a linear output layer and hand-written
//! reverse-mode gradients.
//!
//! Parameters live in one flat vector. Layer `l` stores its weight matrix
//! row-major (`out × in`) followed by its bias.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::NnError;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// Layer widths from input to output.
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone, Default)]
pub struct Tape {
    /// Input followed by each layer's output (post-activation).
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn is_empty(&self) -> bool {
        self.acts.is_empty()
    }

    pub fn clear(&mut self) {
        self.acts.clear();
    }

    pub fn output(&self) -> Option<&[f64]> {
        self.acts.last().map(|v| v.as_slice())
    }
}

fn layer_len(n_in: usize, n_out: usize) -> usize {
    n_in * n_out + n_out
}

impl Mlp {
    /// A network with every parameter zero.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output widths");
        assert!(sizes.iter().all(|&s| s > 0), "layer widths must be positive");
        let n = sizes.windows(2).map(|w| layer_len(w[0], w[1])).sum();
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
        }
    }

    /// Orthogonal weights scaled by `hidden_gain` on hidden layers and
    /// `output_gain` on the last layer; zero biases.
    pub fn orthogonal<R: Rng + ?Sized>(sizes: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let layers = net.num_layers();
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 == layers { output_gain } else { hidden_gain };
            let w = orthogonal_matrix(n_out, n_in, rng) * gain;
            let (ws, _) = net.layer_mut(l);
            for r in 0..n_out {
                for c in 0..n_in {
                    ws[r * n_in + c] = w[(r, c)];
                }
            }
        }
        net
    }

    /// Builds a network from explicit parameters.
    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self, NnError> {
        let net = Self::zeros(sizes);
        if params.len() != net.params.len() {
            return Err(NnError::Shape(format!(
                "{} parameters for layer widths {sizes:?} (expected {})",
                params.len(),
                net.params.len()
            )));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn offset(&self, l: usize) -> usize {
        self.sizes
            .windows(2)
            .take(l)
            .map(|w| layer_len(w[0], w[1]))
            .sum()
    }

    /// Weight (row-major) and bias slices of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let o = self.offset(l);
        let (w, rest) = self.params[o..o + layer_len(n_in, n_out)].split_at(n_in * n_out);
        (w, rest)
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let o = self.offset(l);
        self.params[o..o + layer_len(n_in, n_out)].split_at_mut(n_in * n_out)
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::Shape(format!(
                "input of length {} for a network expecting {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut tape = Tape::default();
        self.forward_tape(x, &mut tape)?;
        Ok(tape.acts.pop().unwrap())
    }

    /// Forward pass that records activations into `tape` for a later
    /// backward pass.
    pub fn forward_tape(&self, x: &[f64], tape: &mut Tape) -> Result<(), NnError> {
        self.check_input(x)?;
        tape.acts.clear();
        tape.acts.push(x.to_vec());
        let layers = self.num_layers();
        let mut o = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[o..o + n_in * n_out];
            let b = &self.params[o + n_in * n_out..o + layer_len(n_in, n_out)];
            o += layer_len(n_in, n_out);
            let input = tape.acts.last().unwrap();
            let mut out = Vec::with_capacity(n_out);
            for r in 0..n_out {
                let row = &w[r * n_in..(r + 1) * n_in];
                let z = b[r] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>();
                out.push(if l + 1 < layers { z.tanh() } else { z });
            }
            tape.acts.push(out);
        }
        Ok(())
    }

    /// Accumulates into `grads` the gradient of `upstream · output` with
    /// respect to the parameters, and returns the gradient with respect to
    /// the input.
    pub fn backward(&self, tape: &Tape, upstream: &[f64], grads: &mut [f64]) -> Result<Vec<f64>, NnError> {
        if tape.is_empty() {
            return Err(NnError::NoForwardPass);
        }
        if tape.acts.len() != self.sizes.len() {
            return Err(NnError::Shape("tape recorded by a different network".into()));
        }
        if upstream.len() != self.output_dim() || grads.len() != self.params.len() {
            return Err(NnError::Shape(format!(
                "upstream length {} / gradient length {} (expected {} / {})",
                upstream.len(),
                grads.len(),
                self.output_dim(),
                self.params.len()
            )));
        }
        let layers = self.num_layers();
        let mut delta = upstream.to_vec();
        let mut o = self.params.len();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            o -= layer_len(n_in, n_out);
            if l + 1 < layers {
                // through tanh: d/dz = 1 - y²
                for (d, y) in delta.iter_mut().zip(&tape.acts[l + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            let input = &tape.acts[l];
            let (gw, gb) = grads[o..o + layer_len(n_in, n_out)].split_at_mut(n_in * n_out);
            let w = &self.params[o..o + n_in * n_out];
            let mut next = vec![0.0; n_in];
            for r in 0..n_out {
                let d = delta[r];
                gb[r] += d;
                if d == 0.0 {
                    continue;
                }
                let grow = &mut gw[r * n_in..(r + 1) * n_in];
                let wrow = &w[r * n_in..(r + 1) * n_in];
                for c in 0..n_in {
                    grow[c] += d * input[c];
                    next[c] += d * wrow[c];
                }
            }
            delta = next;
        }
        Ok(delta)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

/// `rows × cols` matrix with orthonormal rows or columns, whichever is
/// shorter, from the QR factorization of a Gaussian matrix.
pub fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let (tall_r, tall_c) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let a = DMatrix::from_fn(tall_r, tall_c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    // sign fix makes the distribution uniform over orthogonal matrices
    for j in 0..tall_c {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}
