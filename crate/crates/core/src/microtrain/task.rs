use serde::{Deserialize, Serialize};

use super::Mlp;
use crate::error::Result;
use crate::linalg::Matrix;
use crate::rng::{gaussian_matrix, substream};

/// Regression data generated by a teacher network. Samples are columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub teacher: Mlp,
    pub train_x: Matrix,
    pub train_y: Matrix,
    pub val_x: Matrix,
    pub val_y: Matrix,
}

impl Task {
    pub fn train_loss(&self, model: &Mlp) -> Result<f64> {
        model.loss(&self.train_x, &self.train_y)
    }

    pub fn val_loss(&self, model: &Mlp) -> Result<f64> {
        model.loss(&self.val_x, &self.val_y)
    }
}

/// Sizes for [`synth_tasks`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskShape {
    pub d: usize,
    pub h: usize,
    pub o: usize,
    pub train_samples: usize,
    pub val_samples: usize,
}

impl Default for TaskShape {
    fn default() -> Self {
        Self {
            d: 16,
            h: 32,
            o: 8,
            train_samples: 256,
            val_samples: 256,
        }
    }
}

/// Two teachers sharing `W1` with independent `W2`. Task B draws fresh inputs.
pub fn synth_tasks(seed: u64, shape: &TaskShape) -> Result<(Task, Task)> {
    let TaskShape {
        d,
        h,
        o,
        train_samples,
        val_samples,
    } = *shape;
    let mut rng = substream(seed, 0);
    let w1 = gaussian_matrix(&mut rng, h, d, 1.0 / (d as f64).sqrt());
    let make = |rng: &mut _| -> Result<Task> {
        let w2 = gaussian_matrix(rng, o, h, 1.0 / (h as f64).sqrt());
        let teacher = Mlp::new(w1.clone(), w2)?;
        let train_x = gaussian_matrix(rng, d, train_samples, 1.0);
        let val_x = gaussian_matrix(rng, d, val_samples, 1.0);
        Ok(Task {
            train_y: teacher.forward(&train_x)?,
            val_y: teacher.forward(&val_x)?,
            teacher,
            train_x,
            val_x,
        })
    };
    let a = make(&mut rng)?;
    let b = make(&mut rng)?;
    Ok((a, b))
}
