use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Gradients, Real, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.values
    }

    /// Total scalar count over every tensor.
    pub fn count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitScheme {
    /// `U(-b, b)` with `b = sqrt(6 / fan_in)`.
    UniformFanIn,
    Normal(f64),
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitScheme::UniformFanIn => f.write_str("uniform-fan-in"),
            InitScheme::Normal(sigma) => write!(f, "normal:{sigma}"),
        }
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "uniform-fan-in" {
            return Ok(InitScheme::UniformFanIn);
        }
        if let Some(sigma) = s.strip_prefix("normal:") {
            let sigma: f64 = sigma
                .parse()
                .map_err(|_| Error::Config(format!("bad normal sigma `{sigma}`")))?;
            if sigma > 0.0 && sigma.is_finite() {
                return Ok(InitScheme::Normal(sigma));
            }
        }
        Err(Error::Config(format!(
            "unknown init scheme `{s}` (expected uniform-fan-in or normal:<sigma>)"
        )))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitSpec {
    pub scheme: InitScheme,
    pub seed: u64,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            scheme: InitScheme::UniformFanIn,
            seed: 0,
        }
    }
}

/// Seeded parameter source; identical specs yield bit-identical tensors
/// when layers are built in the same order.
pub struct Initializer {
    rng: ChaCha8Rng,
    scheme: InitScheme,
}

impl Initializer {
    pub fn new(spec: InitSpec) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            scheme: spec.scheme,
        }
    }

    pub fn weights<T: Real>(&mut self, shape: Vec<usize>, fan_in: usize) -> Tensor<T> {
        let n: usize = shape.iter().product();
        let data: Vec<T> = match self.scheme {
            InitScheme::UniformFanIn => {
                let bound = (6.0 / fan_in.max(1) as f64).sqrt();
                (0..n)
                    .map(|_| T::from_f64(self.rng.gen_range(-bound..bound)))
                    .collect()
            }
            InitScheme::Normal(sigma) => {
                let dist = Normal::new(0.0, sigma).expect("sigma validated on parse");
                (0..n)
                    .map(|_| T::from_f64(dist.sample(&mut self.rng)))
                    .collect()
            }
        };
        Tensor::new(shape, data).expect("length matches shape")
    }
}

/// One forward pass: a fresh tape plus lazily bound parameter leaves.
pub struct Session<'a, T: Real> {
    pub tape: Tape<T>,
    store: &'a ParamStore<T>,
    bound: Vec<Option<Var>>,
}

impl<'a, T: Real> Session<'a, T> {
    pub fn new(store: &'a ParamStore<T>) -> Self {
        Session {
            tape: Tape::new(),
            store,
            bound: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.param(self.store.get(id).clone());
        self.bound[id.0] = Some(v);
        v
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.tape.constant(value)
    }

    /// Gradient per parameter, zeros for parameters never used.
    pub fn param_grads(&self, grads: &Gradients<T>) -> Result<Vec<Tensor<T>>> {
        self.bound
            .iter()
            .enumerate()
            .map(|(i, v)| match v {
                Some(v) => grads.get(*v),
                None => Ok(Tensor::zeros(self.store.values[i].shape().to_vec())),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_weights() {
        let spec = InitSpec {
            scheme: InitScheme::UniformFanIn,
            seed: 42,
        };
        let a: Tensor<f32> = Initializer::new(spec).weights(vec![3, 3, 4, 8], 36);
        let b: Tensor<f32> = Initializer::new(spec).weights(vec![3, 3, 4, 8], 36);
        assert_eq!(a, b);
        let bound = (6.0f64 / 36.0).sqrt() as f32;
        assert!(a.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn init_scheme_round_trips_through_text() {
        for s in [InitScheme::UniformFanIn, InitScheme::Normal(0.05)] {
            assert_eq!(s.to_string().parse::<InitScheme>().unwrap(), s);
        }
        assert!("normal:-1".parse::<InitScheme>().is_err());
        assert!("xavier".parse::<InitScheme>().is_err());
    }
}
