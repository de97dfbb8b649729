//! Latent-space exports for two-dimensional models: decision-boundary
//! rasters (PPM), decoder mosaics (PGM) and scatter CSVs.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::{resize_images, LabeledDataset};
use crate::error::{Error, Result};
use crate::model::CsaeModel;
use crate::tensor::Tensor;
use crate::train::EVAL_BATCH;

pub const DEFAULT_RESOLUTION: usize = 400;
pub const GRID_MARGIN: f64 = 0.10;

/// Class colours, cycled for more than ten classes.
pub const PALETTE: [[u8; 3]; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

pub fn class_color(class: usize) -> [u8; 3] {
    PALETTE[class % PALETTE.len()]
}

fn require_planar(model: &CsaeModel, what: &str) -> Result<()> {
    if model.lambda() != 2 {
        return Err(Error::invalid(format!(
            "{what} needs a two-dimensional latent space (lambda = 2); this model has lambda = {}",
            model.lambda()
        )));
    }
    Ok(())
}

/// A `resolution x resolution` lattice over a rectangle of the latent plane.
/// Column 0 is `x_min`, row 0 is `y_max`; both ends are included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub resolution: usize,
}

impl GridSpec {
    pub fn new(x_range: (f64, f64), y_range: (f64, f64), resolution: usize) -> Result<Self> {
        let finite = [x_range.0, x_range.1, y_range.0, y_range.1]
            .iter()
            .all(|v| v.is_finite());
        if !finite || x_range.0 >= x_range.1 || y_range.0 >= y_range.1 {
            return Err(Error::invalid(format!(
                "grid ranges must be finite and increasing: {x_range:?}, {y_range:?}"
            )));
        }
        if resolution < 2 {
            return Err(Error::invalid("grid resolution must be at least 2"));
        }
        Ok(GridSpec {
            x_range,
            y_range,
            resolution,
        })
    }

    /// Bounding box of `points` (`[n, 2]`) widened by 10% of its span per
    /// side; a degenerate axis is widened by 1.
    pub fn around(points: &Tensor, resolution: usize) -> Result<Self> {
        if points.rank() != 2 || points.sample_len() != 2 || points.is_empty() {
            return Err(Error::shape(format!(
                "expected latent points [n, 2], got {:?}",
                points.shape()
            )));
        }
        let axis = |a: usize| {
            let vals = (0..points.batch()).map(|i| points.row(i)[a] as f64);
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
                (l.min(v), h.max(v))
            });
            let margin = if hi > lo {
                GRID_MARGIN * (hi - lo)
            } else {
                1.0
            };
            (lo - margin, hi + margin)
        };
        GridSpec::new(axis(0), axis(1), resolution)
    }

    fn step(&self) -> (f64, f64) {
        let r = (self.resolution - 1) as f64;
        (
            (self.x_range.1 - self.x_range.0) / r,
            (self.y_range.1 - self.y_range.0) / r,
        )
    }

    /// Latent coordinates of pixel `(row, col)`.
    pub fn point_at(&self, row: usize, col: usize) -> (f64, f64) {
        let (sx, sy) = self.step();
        (
            self.x_range.0 + col as f64 * sx,
            self.y_range.1 - row as f64 * sy,
        )
    }

    /// Nearest pixel `(row, col)`, or `None` outside the grid.
    pub fn pixel_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (sx, sy) = self.step();
        let col = ((x - self.x_range.0) / sx).round();
        let row = ((self.y_range.1 - y) / sy).round();
        let max = (self.resolution - 1) as f64;
        if (0.0..=max).contains(&col) && (0.0..=max).contains(&row) {
            Some((row as usize, col as usize))
        } else {
            None
        }
    }

    /// All grid points in row-major order as a `[resolution^2, 2]` tensor.
    pub fn points(&self) -> Tensor {
        let r = self.resolution;
        let mut data = Vec::with_capacity(r * r * 2);
        for row in 0..r {
            for col in 0..r {
                let (x, y) = self.point_at(row, col);
                data.push(x as f32);
                data.push(y as f32);
            }
        }
        Tensor::new([r * r, 2], data).expect("resolution >= 2")
    }
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    debug_assert_eq!(rgb.len(), width * height * 3);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

pub fn encode_pgm(width: usize, height: usize, gray: &[u8]) -> Vec<u8> {
    debug_assert_eq!(gray.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    out
}

/// A parsed binary PPM (`P6`) or PGM (`P5`) image with maxval 255.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub magic: [u8; 2],
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Raster {
    pub fn channels(&self) -> usize {
        if &self.magic == b"P6" {
            3
        } else {
            1
        }
    }
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Raster> {
    let magic: [u8; 2] = bytes
        .get(..2)
        .and_then(|m| m.try_into().ok())
        .ok_or_else(|| Error::Truncated("raster header".into()))?;
    let channels = match &magic {
        b"P6" => 3,
        b"P5" => 1,
        _ => return Err(Error::Malformed("not a binary PPM/PGM file".into())),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        while bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
            pos += 1;
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Malformed("raster header field".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Malformed(format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the pixels.
    pos += 1;
    let n = width * height * channels;
    let pixels = bytes
        .get(pos..pos + n)
        .ok_or_else(|| Error::Truncated(format!("expected {n} pixel bytes")))?
        .to_vec();
    if bytes.len() != pos + n {
        return Err(Error::Malformed("trailing bytes after raster".into()));
    }
    Ok(Raster {
        magic,
        width,
        height,
        pixels,
    })
}

/// Classifier argmax over a grid, plus its rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryImage {
    pub grid: GridSpec,
    /// Row-major predicted class per pixel.
    pub classes: Vec<usize>,
    pub rgb: Vec<u8>,
}

impl BoundaryImage {
    pub fn class_at(&self, row: usize, col: usize) -> usize {
        self.classes[row * self.grid.resolution + col]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        encode_ppm(self.grid.resolution, self.grid.resolution, &self.rgb)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_ppm())?;
        Ok(())
    }
}

/// Colours every grid pixel by the classifier head's prediction at that
/// latent point. `overlay` points (latent coordinates with a class) are drawn
/// as 3x3 squares in a darkened class colour on top.
pub fn decision_boundary_image(
    model: &CsaeModel,
    grid: &GridSpec,
    overlay: &[(f64, f64, usize)],
) -> Result<BoundaryImage> {
    require_planar(model, "the decision-boundary image")?;
    let points = grid.points();
    let n = points.batch();
    let mut classes = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + 16 * EVAL_BATCH).min(n);
        classes.extend(
            model
                .classify_latent(&points.slice_batch(start, end)?)?
                .argmax_rows()?,
        );
        start = end;
    }
    let mut rgb: Vec<u8> = classes.iter().flat_map(|&c| class_color(c)).collect();
    let r = grid.resolution;
    for &(x, y, c) in overlay {
        let Some((row, col)) = grid.pixel_of(x, y) else {
            continue;
        };
        let dark = class_color(c).map(|v| v / 2);
        for rr in row.saturating_sub(1)..=(row + 1).min(r - 1) {
            for cc in col.saturating_sub(1)..=(col + 1).min(r - 1) {
                rgb[(rr * r + cc) * 3..(rr * r + cc) * 3 + 3].copy_from_slice(&dark);
            }
        }
    }
    Ok(BoundaryImage {
        grid: *grid,
        classes,
        rgb,
    })
}

/// Decodes every grid point into a `tile x tile` image (nearest-neighbour
/// resized if needed) and lays the tiles out row-major. Returns
/// `(side, gray)` for a square mosaic.
pub fn decoder_grid_image(
    model: &CsaeModel,
    grid: &GridSpec,
    tile: usize,
) -> Result<(usize, Vec<u8>)> {
    require_planar(model, "the decoder grid")?;
    if tile == 0 {
        return Err(Error::invalid("tile size must be positive"));
    }
    let decoded = model.decoder.forward(&grid.points())?;
    let tiles = resize_images(&decoded, tile)?;
    let r = grid.resolution;
    let side = r * tile;
    let mut gray = vec![0u8; side * side];
    for t in 0..r * r {
        let (gr, gc) = (t / r, t % r);
        for (i, row) in tiles.row(t).chunks_exact(tile).enumerate() {
            let dst = (gr * tile + i) * side + gc * tile;
            for (d, &v) in gray[dst..dst + tile].iter_mut().zip(row) {
                *d = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
    }
    Ok((side, gray))
}

pub const SCATTER_NOTE: &str =
    "# raw latent coordinates (lambda > 2); project them before plotting in two dimensions";

/// Writes `x0,..,x{l-1},true_label,predicted_label` for every sample.
pub fn write_latent_scatter(
    model: &CsaeModel,
    data: &LabeledDataset,
    out: impl Write,
) -> Result<()> {
    let z = model.encode_batched(&data.images, EVAL_BATCH)?;
    let predicted = model.classify_latent(&z)?.argmax_rows()?;
    let mut out = out;
    if model.lambda() > 2 {
        writeln!(out, "{SCATTER_NOTE}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..model.lambda()).map(|i| format!("x{i}")).collect();
    header.extend(["true_label".to_string(), "predicted_label".to_string()]);
    w.write_record(&header)?;
    for (i, (&t, &p)) in data.labels.iter().zip(&predicted).enumerate() {
        let mut rec: Vec<String> = z.row(i).iter().map(f32::to_string).collect();
        rec.push(t.to_string());
        rec.push(p.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_latent_scatter(
    model: &CsaeModel,
    data: &LabeledDataset,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_latent_scatter(model, data, fs::File::create(path)?)
}
