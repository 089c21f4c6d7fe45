use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, CHANNELS};

/// Principal components of flattened images.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    height: usize,
    width: usize,
    mean: DVector<f64>,
    /// One orthonormal component per row.
    components: DMatrix<f64>,
    explained_variance: Vec<f64>,
}

/// Mean-centred PCA via the eigendecomposition of whichever of the Gram or
/// covariance matrices is smaller. Each component's largest-magnitude entry
/// is made positive.
pub fn fit_pca(images: &[ImageTensor], components: usize) -> Result<PcaModel> {
    let first = images
        .first()
        .ok_or_else(|| Error::InsufficientData("PCA needs at least one image".into()))?;
    for img in images {
        first.ensure_same_shape(img)?;
    }
    let n = images.len();
    let d = first.len();
    if components == 0 || components > n || components > d {
        return Err(Error::InsufficientData(format!(
            "cannot fit {components} components on {n} images of {d} values"
        )));
    }
    let mut x = DMatrix::<f64>::zeros(n, d);
    for (i, img) in images.iter().enumerate() {
        x.row_mut(i).copy_from_slice(img.data());
    }
    let mean = DVector::from_iterator(d, x.column_iter().map(|c| c.mean()));
    for mut row in x.row_iter_mut() {
        row -= mean.transpose();
    }

    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(components);
    let mut variance = Vec::with_capacity(components);
    let dof = (n.max(2) - 1) as f64;
    if n <= d {
        let gram = &x * x.transpose();
        let (values, vectors) = sorted_eigen(gram);
        let tol = values.first().copied().unwrap_or(0.0).max(0.0) * 1e-12 + 1e-300;
        for k in 0..components {
            if values[k] > tol {
                let v = vectors.column(k);
                let u = x.transpose() * v / values[k].sqrt();
                basis.push(u);
                variance.push(values[k] / dof);
            }
        }
        variance.resize(basis.len(), 0.0);
    } else {
        let cov = x.transpose() * &x;
        let (values, vectors) = sorted_eigen(cov);
        for k in 0..components {
            basis.push(vectors.column(k).into_owned());
            variance.push(values[k].max(0.0) / dof);
        }
    }
    orthonormalize(&mut basis);
    complete_basis(&mut basis, components, d);
    variance.resize(components, 0.0);

    let mut comp = DMatrix::<f64>::zeros(components, d);
    for (k, mut u) in basis.into_iter().enumerate() {
        let (imax, _) = u.iter().enumerate().fold(
            (0, 0.0f64),
            |best, (i, v)| {
                if v.abs() > best.1 {
                    (i, v.abs())
                } else {
                    best
                }
            },
        );
        if u[imax] < 0.0 {
            u = -u;
        }
        comp.row_mut(k).copy_from(&u.transpose());
    }
    Ok(PcaModel {
        height: first.height(),
        width: first.width(),
        mean,
        components: comp,
        explained_variance: variance,
    })
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

fn orthonormalize(basis: &mut [DVector<f64>]) {
    for k in 0..basis.len() {
        for _ in 0..2 {
            for j in 0..k {
                let proj = basis[j].dot(&basis[k]);
                let prev = basis[j].clone();
                basis[k] -= prev * proj;
            }
        }
        let norm = basis[k].norm();
        if norm > 0.0 {
            basis[k] /= norm;
        }
    }
}

/// Extends a partial orthonormal set with unit vectors orthogonal to it,
/// for requested components beyond the data's rank.
fn complete_basis(basis: &mut Vec<DVector<f64>>, target: usize, d: usize) {
    let mut axis = 0;
    while basis.len() < target && axis < d {
        let mut v = DVector::<f64>::zeros(d);
        v[axis] = 1.0;
        axis += 1;
        for _ in 0..2 {
            for b in basis.iter() {
                let proj = b.dot(&v);
                v -= b * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            basis.push(v / norm);
        }
    }
}

impl PcaModel {
    pub fn component_count(&self) -> usize {
        self.components.nrows()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn mean_image(&self) -> ImageTensor {
        ImageTensor::from_clamped(self.height, self.width, self.mean.as_slice().to_vec())
            .expect("mean has the fitted shape")
    }

    /// Component `k` as a flat vector.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.components.row(k).iter().copied().collect()
    }

    fn check(&self, img: &ImageTensor) -> Result<()> {
        if img.height() != self.height || img.width() != self.width {
            return Err(Error::shape(
                format!("{}x{}x{CHANNELS}", self.height, self.width),
                img.shape_string(),
            ));
        }
        Ok(())
    }

    /// Coefficients of the mean-centred image on the components.
    pub fn embed(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        self.check(img)?;
        let centred = DVector::from_column_slice(img.data()) - &self.mean;
        Ok((&self.components * centred).iter().copied().collect())
    }

    /// Unclamped reconstruction `mean + componentsᵀ · coeffs`.
    pub fn reconstruct_raw(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.component_count() {
            return Err(Error::shape(
                format!("{} coefficients", self.component_count()),
                format!("{} coefficients", coeffs.len()),
            ));
        }
        let c = DVector::from_column_slice(coeffs);
        Ok((&self.mean + self.components.transpose() * c).iter().copied().collect())
    }

    /// Reconstruction clamped into a valid image.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Result<ImageTensor> {
        ImageTensor::from_clamped(self.height, self.width, self.reconstruct_raw(coeffs)?)
    }
}
