//! Spatial concentration of feature maps.

use ndarray::{ArrayView2, ArrayView4};

use crate::error::{Error, Result};
use crate::head::ModelHead;
use crate::scalar::Scalar;
use crate::transform::predict_logits;

/// Softmax over the cells of a map after dividing it by its mean absolute
/// value. An all-zero map gives the uniform distribution.
pub fn normalized_softmax<T: Scalar>(map: ArrayView2<'_, T>) -> Vec<T> {
    let cells = T::from_usize_lossy(map.len());
    let scale = map.iter().map(|v| v.abs()).sum::<T>() / cells;
    if !(scale > T::zero()) {
        return vec![T::one() / cells; map.len()];
    }
    let scaled: Vec<T> = map.iter().map(|&v| v / scale).collect();
    crate::transform::softmax(&scaled)
}

/// Sum over cells of the cellwise maximum across the given maps' softmax
/// distributions, divided by the number of maps.
pub fn locality_of_maps<T: Scalar>(maps: &[ArrayView2<'_, T>]) -> T {
    if maps.is_empty() {
        return T::zero();
    }
    let soft: Vec<Vec<T>> = maps.iter().map(|m| normalized_softmax(*m)).collect();
    let cells = soft[0].len();
    let total = (0..cells).fold(T::zero(), |acc, i| acc + soft.iter().map(|s| s[i]).fold(T::zero(), T::max));
    total / T::from_usize_lossy(maps.len())
}

/// Mean over samples of [`locality_of_maps`] on the (up to) five most active
/// features of the predicted class, as a percentage.
///
/// `maps` covers the raw features, `f_star` the selected ones.
pub fn locality5<T: Scalar>(maps: ArrayView4<'_, T>, f_star: ArrayView2<'_, T>, head: &ModelHead<T>) -> Result<f64> {
    if maps.shape()[0] != f_star.nrows() || maps.shape()[1] != head.n_raw_features() {
        return Err(Error::DimensionMismatch {
            what: "spatial maps".into(),
            expected: f_star.nrows(),
            found: maps.shape()[0],
        });
    }
    if f_star.nrows() == 0 {
        return Err(Error::invalid("no samples"));
    }
    let mut total = 0.0;
    for (i, row) in f_star.outer_iter().enumerate() {
        let f = row.to_vec();
        let (_, c_hat) = predict_logits(&f, head);
        let mut feats = head.class_features(c_hat).to_vec();
        feats.sort_by(|&a, &b| f[b].partial_cmp(&f[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        feats.truncate(5);
        let views: Vec<ArrayView2<'_, T>> = feats
            .iter()
            .map(|&j| maps.slice(ndarray::s![i, head.selection()[j], .., ..]))
            .collect();
        total += locality_of_maps(&views).to_f64_lossy();
    }
    Ok(100.0 * total / f_star.nrows() as f64)
}
