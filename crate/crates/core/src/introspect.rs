//! Plot-ready views of a trained model: per-frame attention and a
//! low-dimensional projection of the temporal-token embeddings.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::encoder::{token_budget, EncoderConfig};
use crate::error::{Error, Result};
use crate::lm::{ForwardTrace, Prompt, StagedModel};

/// Collapse an attention row over the video prefix to one weight per frame:
/// drop each segment's spatial rows, view the rest as `(T, N_T)` and
/// average over `N_T`.
pub fn aggregate_attention(v: &[f64], cfg: &EncoderConfig) -> Result<Vec<f64>> {
    let budget = token_budget(cfg);
    if v.len() != budget {
        return Err(Error::Shape(format!("attention vector has {} entries, encoder budget is {budget}", v.len())));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidInput(format!("attention weights must be finite and non-negative, got {x}")));
    }
    let nt = cfg.temporal_tokens();
    if nt == 0 {
        return Err(Error::Config("temporal stream is disabled; no per-frame rows to aggregate".into()));
    }
    let (ns, rows) = (cfg.spatial_tokens(), cfg.segment_rows());
    let temporal: Vec<f64> = v.chunks(rows).flat_map(|seg| seg[ns..].iter().copied()).collect();
    Ok(temporal.chunks(nt).map(|frame| frame.iter().sum::<f64>() / nt as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadReduction {
    #[default]
    Mean,
    Max,
    Head(usize),
}

/// Attention from sequence position `query` onto the video rows in
/// `layer`, reduced over heads.
pub fn video_attention(trace: &ForwardTrace, prompt: &Prompt, layer: usize, query: usize, reduction: HeadReduction) -> Result<Vec<f64>> {
    if layer >= trace.layers() {
        return Err(Error::InvalidInput(format!("layer {layer} out of {}", trace.layers())));
    }
    let heads = trace.heads();
    let seq = trace.attention(layer, 0).nrows();
    if query >= seq {
        return Err(Error::InvalidInput(format!("query position {query} out of {seq}")));
    }
    let range = prompt.video_range();
    let row = |h: usize| trace.attention(layer, h).slice(s![query, range.clone()]).to_owned();
    let out = match reduction {
        HeadReduction::Mean => (0..heads).map(row).fold(Array1::zeros(range.len()), |a, r| a + r) / heads as f64,
        HeadReduction::Max => (0..heads).map(row).fold(Array1::zeros(range.len()), |a: Array1<f64>, r| {
            ndarray::Zip::from(&a).and(&r).map_collect(|x, y| x.max(*y))
        }),
        HeadReduction::Head(h) if h < heads => row(h),
        HeadReduction::Head(h) => return Err(Error::InvalidInput(format!("head {h} out of {heads}"))),
    };
    Ok(out.to_vec())
}

/// Top principal directions of a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `(n, d)` centred data times components.
    pub coords: Array2<f64>,
    /// `(d, D)`, one unit row per component.
    pub components: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    /// Share of total variance per component.
    pub explained: Vec<f64>,
    pub mean: Vec<f64>,
    /// Set when the data has fewer than `d` directions of variance; the
    /// missing components and coordinates are zero.
    pub warning: Option<String>,
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and eigenvectors as columns.
pub fn symmetric_eigen(a: &ArrayView2<'_, f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(format!("eigen-decomposition needs a square matrix, got {:?}", a.dim())));
    }
    let mut m = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    let scale = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q))).map(|(p, q)| m[[p, q]].powi(2)).sum();
        if off.sqrt() <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].total_cmp(&m[[i, i]]));
    let values = order.iter().map(|&i| m[[i, i]]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[[r, order[c]]]);
    Ok((values, vectors))
}

/// Project rows of `x` onto their top `d` principal components (`d` in 1..=3).
/// Each component's largest-magnitude entry is made positive.
pub fn pca(x: &ArrayView2<'_, f64>, d: usize) -> Result<Projection> {
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidInput(format!("projection dimension must be 1, 2 or 3, got {d}")));
    }
    let (n, dim) = x.dim();
    if n <= d || dim < d {
        return Err(Error::InvalidInput(format!("need more than {d} points of dimension >= {d}, got {n} x {dim}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pca input".into()));
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centred = x - &mean;
    let cov = centred.t().dot(&centred) / (n - 1) as f64;
    let (values, vectors) = symmetric_eigen(&cov.view())?;
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    let tol = 1e-12 * values.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let mut components = Array2::zeros((d, dim));
    let mut eigenvalues = Vec::with_capacity(d);
    let mut kept = 0;
    for k in 0..d {
        let lambda = values[k].max(0.0);
        if lambda > tol {
            let mut c = vectors.column(k).to_owned();
            let lead = c.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
            if lead < 0.0 {
                c.mapv_inplace(|v| -v);
            }
            components.row_mut(k).assign(&c);
            eigenvalues.push(lambda);
            kept += 1;
        } else {
            eigenvalues.push(0.0);
        }
    }
    let explained = eigenvalues.iter().map(|l| if total > 0.0 { l / total } else { 0.0 }).collect();
    let warning = (kept < d).then(|| format!("data has rank {kept} < {d}; remaining components are zero"));
    Ok(Projection { coords: centred.dot(&components.t()), components, eigenvalues, explained, mean: mean.to_vec(), warning })
}

/// Embedding rows of the temporal tokens `<0>..<M>`, in index order.
pub fn temporal_embeddings(model: &StagedModel) -> Result<Array2<f64>> {
    let vocab = model.vocab.as_ref().ok_or_else(|| Error::Config("model has no temporal tokens".into()))?;
    let ids: Vec<usize> = vocab.temporal_ids().collect();
    Ok(model.embedding.select(Axis(0), &ids))
}

/// Mean Euclidean distance between rows `i < j` with `j - i <= near`, and
/// between rows with `j - i >= far`.
pub fn adjacency_distances(rows: &ArrayView2<'_, f64>, near: usize, far: usize) -> Result<(f64, f64)> {
    let n = rows.nrows();
    let (mut sn, mut cn, mut sf, mut cf) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..n {
        for j in i + 1..n {
            let dist = (&rows.row(i) - &rows.row(j)).mapv(|v| v * v).sum().sqrt();
            if j - i <= near {
                sn += dist;
                cn += 1;
            } else if j - i >= far {
                sf += dist;
                cf += 1;
            }
        }
    }
    if cn == 0 || cf == 0 {
        return Err(Error::InvalidInput(format!("{n} rows give no pairs at gap <= {near} and >= {far}")));
    }
    Ok((sn / cn as f64, sf / cf as f64))
}

pub enum PlotData<'a> {
    FrameWeights(&'a [f64]),
    Projection(&'a Projection),
}

/// CSV with `frame,weight` or `index,x[,y[,z]]` columns.
pub fn emit_plot_data(data: &PlotData<'_>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    match data {
        PlotData::FrameWeights(weights) => {
            w.write_record(["frame", "weight"])?;
            for (i, v) in weights.iter().enumerate() {
                w.write_record([i.to_string(), v.to_string()])?;
            }
        }
        PlotData::Projection(p) => {
            let d = p.coords.ncols();
            w.write_record(std::iter::once("index").chain(["x", "y", "z"].into_iter().take(d)))?;
            for (i, row) in p.coords.rows().into_iter().enumerate() {
                w.write_record(std::iter::once(i.to_string()).chain(row.iter().map(f64::to_string)))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Header and numeric rows of a file written by [`emit_plot_data`].
pub fn read_plot_data(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| {
            rec?.iter().map(|f| f.parse::<f64>().map_err(|_| Error::Schema(format!("non-numeric field {f:?} in {}", path.display())))).collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok((header, rows))
}
