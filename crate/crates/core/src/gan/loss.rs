use crate::error::{Error, Result};

/// Discriminator outputs and the true scores they should match.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub d: Vec<f64>,
    pub q: Vec<f64>,
}

impl Scored {
    pub fn new(d: Vec<f64>, q: Vec<f64>) -> Self {
        Self { d, q }
    }

    /// Mean over metrics of the squared prediction error.
    pub fn sq_error(&self) -> Result<f64> {
        mean_sq(&self.d, &self.q)
    }
}

/// One sample of a discriminator batch.
#[derive(Clone, Debug, PartialEq)]
pub struct DItem {
    pub id: String,
    /// Scores of the generator's output.
    pub generated: Scored,
    /// Scores of the enhanced example, when the sample has one.
    pub example: Option<Scored>,
}

fn mean_sq(d: &[f64], t: &[f64]) -> Result<f64> {
    if d.len() != t.len() || d.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} predictions vs {} targets", d.len(), t.len())));
    }
    Ok(d.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / d.len() as f64)
}

fn batch_mean(batch: &[DItem], f: impl Fn(&DItem) -> Result<f64>) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for item in batch {
        total += f(item)?;
    }
    Ok(total / batch.len() as f64)
}

/// Squared error of the predicted scores of generator outputs, averaged over
/// metrics and batch.
pub fn d_loss_zero_knowledge(batch: &[DItem]) -> Result<f64> {
    batch_mean(batch, |it| it.generated.sq_error())
}

/// [`d_loss_zero_knowledge`] plus, per sample, the squared error on the
/// enhanced example.
pub fn d_loss_with_examples(batch: &[DItem]) -> Result<f64> {
    batch_mean(batch, |it| {
        let ex = it.example.as_ref().ok_or_else(|| Error::MissingExamples(it.id.clone()))?;
        Ok(it.generated.sq_error()? + ex.sq_error()?)
    })
}

/// Generator loss: squared distance of the scores to the target `t`,
/// averaged over metrics and batch.
pub fn g_loss(preds: &[Vec<f64>], t: &[f64]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for p in preds {
        total += mean_sq(p, t)?;
    }
    Ok(total / preds.len() as f64)
}
