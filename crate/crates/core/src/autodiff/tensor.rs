use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Dense row-major `f64` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    /// Normal(0, std) entries.
    pub fn randn(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Self {
        let n = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        // Box-Muller; consumes pairs for determinism
        while data.len() < n {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            let t = std::f64::consts::TAU * u2;
            data.push(std * r * t.cos());
            if data.len() < n {
                data.push(std * r * t.sin());
            }
        }
        Self { shape: shape.to_vec(), data }
    }

    /// He-style initialization for a conv/linear weight with `fan_in` inputs.
    pub fn he_init(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Self {
        Self::randn(rng, shape, (2.0 / fan_in as f64).sqrt())
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn value(&self) -> f64 {
        assert!(self.is_scalar(), "value() on non-scalar tensor {:?}", self.shape);
        self.data[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
