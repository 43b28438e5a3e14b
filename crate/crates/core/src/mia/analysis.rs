//! Overfitting measurement and its correlation with attack success.

use crate::data::SubsetView;
use crate::error::{Error, Result};
use crate::model_zoo::FrozenClassifier;
use crate::scalar::Scalar;
use crate::vpl::{evaluate_prompt, LabelMap, Prompt};

/// Train accuracy minus test accuracy of a prompt; in [-1, 1].
pub fn overfitting_level<T: Scalar>(
    model: &FrozenClassifier<T>,
    prompt: &Prompt<T>,
    label_map: &LabelMap,
    train: SubsetView<'_, T>,
    test: SubsetView<'_, T>,
) -> Result<f64> {
    let train_acc = evaluate_prompt(model, prompt, label_map, train)?;
    let test_acc = evaluate_prompt(model, prompt, label_map, test)?;
    Ok(train_acc - test_acc)
}

/// Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Input(format!(
            "pearson needs equal-length vectors, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Input("pearson needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mean_x: f64 = xs.iter().sum::<f64>() / n;
    let mean_y: f64 = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mean_x) * (y - mean_y);
        var_x += (x - mean_x) * (x - mean_x);
        var_y += (y - mean_y) * (y - mean_y);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "one of the inputs has zero variance".into(),
        ));
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_linear_relations() {
        let xs = [0.1, 0.4, 0.9, 1.3];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((pearson(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_vectors_match_hand_recomputation() {
        // xs=(1,2,3,4), ys=(1,3,2,5):
        // mean_x=2.5 mean_y=2.75, cov=sum((x-mx)(y-my))=5.5/..., by hand:
        // dx=(-1.5,-0.5,0.5,1.5), dy=(-1.75,0.25,-0.75,2.25)
        // cov = 2.625+(-0.125)+(-0.375)+3.375 = 5.5
        // var_x = 2.25+0.25+0.25+2.25 = 5, var_y = 3.0625+0.0625+0.5625+5.0625 = 8.75
        // r = 5.5 / sqrt(5 * 8.75) = 0.8315218...
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 5.0]).unwrap();
        let expected = 5.5 / (5.0f64 * 8.75).sqrt();
        assert!((r - expected).abs() < 1e-12);
        assert!((r - 0.831_521_8).abs() < 1e-6);
    }

    #[test]
    fn zero_variance_is_an_error() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }
}
