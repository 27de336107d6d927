use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};

/// A named, row-major parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data does not match its shape"
        );
        Self {
            name: name.into(),
            shape,
            data,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![0.0; n])
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        assert_eq!(self.shape.len(), 2, "{} is not a matrix", self.name);
        ArrayView2::from_shape((self.shape[0], self.shape[1]), &self.data).expect("shape")
    }

    pub fn matrix_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        assert_eq!(self.shape.len(), 2, "{} is not a matrix", self.name);
        ArrayViewMut2::from_shape((self.shape[0], self.shape[1]), &mut self.data).expect("shape")
    }

    pub fn vector(&self) -> ArrayView1<'_, f64> {
        assert_eq!(self.shape.len(), 1, "{} is not a vector", self.name);
        ArrayView1::from(&self.data[..])
    }

    pub fn vector_mut(&mut self) -> ArrayViewMut1<'_, f64> {
        assert_eq!(self.shape.len(), 1, "{} is not a vector", self.name);
        ArrayViewMut1::from(&mut self.data[..])
    }
}

/// One gradient tensor per parameter tensor, same names and shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub tensors: Vec<Tensor>,
}

impl GradientSet {
    pub fn zeros_like(params: &[Tensor]) -> Self {
        Self {
            tensors: params
                .iter()
                .map(|t| Tensor::zeros(t.name.clone(), t.shape.clone()))
                .collect(),
        }
    }

    /// L2 norm over all tensors concatenated.
    pub fn global_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        assert_eq!(self.tensors.len(), other.tensors.len());
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|g| g.is_finite()))
    }
}
