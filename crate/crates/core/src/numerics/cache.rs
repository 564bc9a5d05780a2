use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::numerics::activation::ActivationKind;
use crate::numerics::matrix::Matrix;
use crate::numerics::tensor::Tensor4;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Conv2d,
    MaxPool2d,
    ChannelPool,
    ResizeBilinear,
    Activation,
    SppPool,
    Dense,
    SemanticRefine,
    FeatureEnhance,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Forward-pass record consumed by the matching backward function.
///
/// Every cache carries a process-unique id and the kind of op that produced it;
/// handing it to the backward of a different op is reported as
/// [`Error::CacheMismatch`].
#[derive(Debug, Clone)]
pub struct OpCache<T> {
    id: u64,
    pub(crate) record: Record<T>,
}

#[derive(Debug, Clone)]
pub(crate) enum Record<T> {
    Conv2d {
        input: Tensor4<T>,
        weights: Tensor4<T>,
        dilation: usize,
    },
    MaxPool2d {
        input_dims: [usize; 4],
        output_dims: [usize; 4],
        argmax: Vec<usize>,
    },
    ChannelPool {
        input_dims: [usize; 4],
        argmax_channel: Vec<usize>,
    },
    ResizeBilinear {
        input_dims: [usize; 4],
        output_dims: [usize; 4],
    },
    Activation {
        kind: ActivationKind,
        output: Tensor4<T>,
    },
    SppPool {
        input_dims: [usize; 4],
        argmax: Vec<usize>,
    },
    Dense {
        input: Vec<T>,
        weights: Matrix<T>,
    },
    SemanticRefine {
        features: Tensor4<T>,
        gate: Tensor4<T>,
    },
    FeatureEnhance(Box<crate::model::enhance::EnhanceTrace<T>>),
}

impl<T> Record<T> {
    fn kind(&self) -> OpKind {
        match self {
            Record::Conv2d { .. } => OpKind::Conv2d,
            Record::MaxPool2d { .. } => OpKind::MaxPool2d,
            Record::ChannelPool { .. } => OpKind::ChannelPool,
            Record::ResizeBilinear { .. } => OpKind::ResizeBilinear,
            Record::Activation { .. } => OpKind::Activation,
            Record::SppPool { .. } => OpKind::SppPool,
            Record::Dense { .. } => OpKind::Dense,
            Record::SemanticRefine { .. } => OpKind::SemanticRefine,
            Record::FeatureEnhance(_) => OpKind::FeatureEnhance,
        }
    }
}

impl<T> OpCache<T> {
    pub(crate) fn new(record: Record<T>) -> Self {
        Self {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            record,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn kind(&self) -> OpKind {
        self.record.kind()
    }

    pub(crate) fn expect(&self, kind: OpKind) -> Result<&Record<T>> {
        if self.kind() != kind {
            return Err(Error::CacheMismatch {
                expected: kind.to_string(),
                found: format!("{} (cache #{})", self.kind(), self.id),
            });
        }
        Ok(&self.record)
    }
}

pub(crate) fn check_grad_dims(expected: [usize; 4], got: [usize; 4], op: OpKind) -> Result<()> {
    if expected != got {
        return Err(Error::CacheMismatch {
            expected: format!("{op} grad_out dims {expected:?}"),
            found: format!("{got:?}"),
        });
    }
    Ok(())
}
