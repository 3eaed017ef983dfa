//! Named parameter traversal and initialization.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::rng::SeededRng;
use crate::tensor::Matrix;

/// Visits every parameter matrix under a dotted name such as
/// `encoder.layers.3.ffn1.w1`.
pub trait Params {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Matrix));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Matrix));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, m| n += m.len());
        n
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit("", &mut |name, _| names.push(String::from(name)));
        names
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        String::from(name)
    } else {
        format!("{prefix}.{name}")
    }
}

impl Params for Matrix {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Matrix)) {
        f(prefix, self)
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Matrix)) {
        f(prefix, self)
    }
}

impl<T: Params> Params for Vec<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Matrix)) {
        for (i, item) in self.iter().enumerate() {
            item.visit(&join(prefix, &format!("{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Matrix)) {
        for (i, item) in self.iter_mut().enumerate() {
            item.visit_mut(&join(prefix, &format!("{i}")), f);
        }
    }
}

impl<T: Params> Params for Option<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Matrix)) {
        if let Some(item) = self {
            item.visit(prefix, f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Matrix)) {
        if let Some(item) = self {
            item.visit_mut(prefix, f);
        }
    }
}

/// Implements [`Params`] for a struct by listing its parameter fields.
macro_rules! impl_params {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::params::Params for $ty {
            fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &$crate::tensor::Matrix)) {
                $( $crate::params::Params::visit(&self.$field, &$crate::params::join(prefix, stringify!($field)), f); )*
            }

            fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut $crate::tensor::Matrix)) {
                $( $crate::params::Params::visit_mut(&mut self.$field, &$crate::params::join(prefix, stringify!($field)), f); )*
            }
        }
    };
}
pub(crate) use impl_params;

/// Source of initial parameter values.
///
/// `Uniform` draws weights and biases from `[-scale, scale)`; norm gains are
/// always 1 and norm offsets 0.
pub enum Init<'a> {
    Zeros,
    Uniform { rng: &'a mut SeededRng, scale: f32 },
}

impl Init<'_> {
    pub fn weight(&mut self, rows: usize, cols: usize) -> Matrix {
        match self {
            Init::Zeros => Matrix::zeros(rows, cols),
            Init::Uniform { rng, scale } => rng.uniform_matrix(rows, cols, -*scale, *scale),
        }
    }

    /// A (1 × n) bias row.
    pub fn bias(&mut self, n: usize) -> Matrix {
        self.weight(1, n)
    }

    pub fn norm_gain(&mut self, n: usize) -> Matrix {
        Matrix::filled(1, n, 1.0)
    }

    pub fn norm_offset(&mut self, n: usize) -> Matrix {
        Matrix::zeros(1, n)
    }
}

/// Default weight range for seeded initialization.
pub const INIT_SCALE: f32 = 0.1;
