//! On-disk formats: gather cube, model checkpoint, feature and label CSV,
//! and P6 facies-map rendering. Every writer/reader pair round-trips
//! bit-exactly; floats in text formats use Rust's shortest round-trip
//! representation.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::cae::{CaeLayer, CaeModel};
use crate::error::{Error, Result};
use crate::features::GatherCube;
use crate::matrix::Matrix;
use crate::synth::FaciesMap;
use crate::tensor::{Tensor, UnpoolMode};

const CUBE_MAGIC: &str = "GCUBE1";
const CHECKPOINT_MAGIC: &[u8; 8] = b"CAEMDL01";

fn bad(what: &'static str, reason: impl Into<String>) -> Error {
    Error::BadFormat {
        what,
        reason: reason.into(),
    }
}

/// Header line `GCUBE1 inlines crosslines offsets samples dt_ms horizon_ms
/// window_ms`, then the payload as little-endian f64, sample fastest, then
/// offset, crossline, inline.
pub fn write_cube(path: &Path, cube: &GatherCube) -> Result<()> {
    cube.validate()?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(
        w,
        "{CUBE_MAGIC} {} {} {} {} {} {} {}",
        cube.inlines,
        cube.crosslines,
        cube.offsets,
        cube.samples,
        cube.dt_ms,
        cube.horizon_ms,
        cube.window_ms
    )?;
    for v in &cube.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cube(path: &Path) -> Result<GatherCube> {
    let bytes = fs::read(path)?;
    let header_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("gather cube", "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| bad("gather cube", "header is not UTF-8"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 8 || fields[0] != CUBE_MAGIC {
        return Err(bad("gather cube", format!("bad header: {header:?}")));
    }
    let dim = |i: usize| -> Result<usize> {
        fields[i]
            .parse()
            .map_err(|_| bad("gather cube", format!("bad extent {:?}", fields[i])))
    };
    let real = |i: usize| -> Result<f64> {
        fields[i]
            .parse()
            .map_err(|_| bad("gather cube", format!("bad number {:?}", fields[i])))
    };
    let (inlines, crosslines, offsets, samples) = (dim(1)?, dim(2)?, dim(3)?, dim(4)?);
    let payload = &bytes[header_end + 1..];
    let count = inlines * crosslines * offsets * samples;
    if payload.len() != count * 8 {
        return Err(bad(
            "gather cube",
            format!("payload is {} bytes, expected {}", payload.len(), count * 8),
        ));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let cube = GatherCube {
        inlines,
        crosslines,
        offsets,
        samples,
        dt_ms: real(5)?,
        horizon_ms: real(6)?,
        window_ms: real(7)?,
        data,
    };
    cube.validate()?;
    Ok(cube)
}

/// Binary checkpoint: magic, little-endian u32 extents, then per layer its
/// dimensions, flags (bit 0 pool, bit 1 identity decoder), slope and raw
/// parameters in declaration order.
pub fn write_checkpoint(path: &Path, model: &CaeModel) -> Result<()> {
    model.feature_shapes()?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    let u32s = [
        model.layers.len() as u32,
        model.input_shape[0] as u32,
        model.input_shape[1] as u32,
        model.input_shape[2] as u32,
    ];
    for v in u32s {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&[match model.unpool_mode {
        UnpoolMode::Recorded => 0u8,
        UnpoolMode::Random => 1u8,
    }])?;
    for layer in &model.layers {
        for v in [
            layer.in_channels() as u32,
            layer.kernel_size() as u32,
            layer.maps() as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        let flags = layer.pool as u8 | (layer.decoder_identity as u8) << 1;
        w.write_all(&[flags])?;
        w.write_all(&layer.slope.to_le_bytes())?;
        for v in layer.filters.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &layer.encoder_bias {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &layer.decoder_bias {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(bad("checkpoint", "truncated file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        self.take(n * 8).map(|s| {
            s.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect()
        })
    }
}

pub fn read_checkpoint(path: &Path) -> Result<CaeModel> {
    let bytes = fs::read(path)?;
    let mut r = ByteReader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(bad("checkpoint", "bad magic"));
    }
    let n_layers = r.u32()? as usize;
    let input_shape = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let unpool_mode = match r.u8()? {
        0 => UnpoolMode::Recorded,
        1 => UnpoolMode::Random,
        m => return Err(bad("checkpoint", format!("unknown unpool mode {m}"))),
    };
    if n_layers == 0 || n_layers > 64 {
        return Err(bad("checkpoint", format!("implausible layer count {n_layers}")));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let (c, n, k) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        if c == 0 || n == 0 || k == 0 || n % 2 == 0 {
            return Err(bad("checkpoint", format!("bad layer extents {c}x{n}x{n}x{k}")));
        }
        let flags = r.u8()?;
        let slope = r.f64()?;
        let filters = Tensor::from_vec(&[c, n, n, k], r.f64s(c * n * n * k)?)
            .map_err(|e| bad("checkpoint", format!("filters: {e}")))?;
        layers.push(CaeLayer {
            filters,
            encoder_bias: r.f64s(k)?,
            decoder_bias: r.f64s(c)?,
            slope,
            pool: flags & 1 != 0,
            decoder_identity: flags & 2 != 0,
        });
    }
    if r.pos != bytes.len() {
        return Err(bad("checkpoint", "trailing bytes"));
    }
    let model = CaeModel {
        layers,
        input_shape,
        unpool_mode,
    };
    model
        .feature_shapes()
        .map_err(|e| bad("checkpoint", format!("inconsistent layer chain: {e}")))?;
    Ok(model)
}

/// `inline,crossline,f0,...` with one row per window, inline-major.
pub fn write_features(path: &Path, keys: &[(usize, usize)], matrix: &Matrix) -> Result<()> {
    if keys.len() != matrix.rows() {
        return Err(Error::ShapeMismatch {
            context: "write_features",
            detail: format!("{} keys vs {} rows", keys.len(), matrix.rows()),
        });
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "inline,crossline")?;
    for j in 0..matrix.cols() {
        write!(w, ",f{j}")?;
    }
    writeln!(w)?;
    for (i, &(il, xl)) in keys.iter().enumerate() {
        write!(w, "{il},{xl}")?;
        for v in matrix.row(i) {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<(Vec<(usize, usize)>, Matrix)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("feature csv", "empty file"))?;
    if !header.starts_with("inline,crossline") {
        return Err(bad("feature csv", format!("bad header {header:?}")));
    }
    let cols = header.split(',').count() - 2;
    let mut keys = Vec::new();
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let mut dim = |name: &str| -> Result<usize> {
            fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| bad("feature csv", format!("line {}: bad {name}", ln + 2)))
        };
        let il = dim("inline")?;
        let xl = dim("crossline")?;
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| bad("feature csv", format!("line {}: bad value {f:?}", ln + 2)))
            })
            .collect::<Result<_>>()?;
        if values.len() != cols {
            return Err(bad(
                "feature csv",
                format!("line {}: {} values, expected {cols}", ln + 2, values.len()),
            ));
        }
        keys.push((il, xl));
        rows.push(values);
    }
    Ok((keys, Matrix::from_rows(&rows)?))
}

/// `inline,crossline,label`, one row per cell, inline-major.
pub fn write_labels(path: &Path, map: &FaciesMap) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "inline,crossline,label")?;
    for il in 0..map.inlines {
        for xl in 0..map.crosslines {
            writeln!(w, "{il},{xl},{}", map.get(il, xl))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<FaciesMap> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("inline,crossline,label") => {}
        other => return Err(bad("label csv", format!("bad header {other:?}"))),
    }
    let mut entries = Vec::new();
    let (mut max_il, mut max_xl) = (0usize, 0usize);
    for (ln, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(bad("label csv", format!("line {}: expected 3 fields", ln + 2)));
        }
        let parse = |f: &str| -> Result<usize> {
            f.parse()
                .map_err(|_| bad("label csv", format!("line {}: bad field {f:?}", ln + 2)))
        };
        let (il, xl, label) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
        max_il = max_il.max(il);
        max_xl = max_xl.max(xl);
        entries.push(((il, xl), label));
    }
    if entries.is_empty() {
        return Err(bad("label csv", "no rows"));
    }
    let (inlines, crosslines) = (max_il + 1, max_xl + 1);
    let keys: Vec<(usize, usize)> = entries.iter().map(|e| e.0).collect();
    let labels: Vec<usize> = entries.iter().map(|e| e.1).collect();
    FaciesMap::from_keyed_labels(inlines, crosslines, &keys, &labels)
}

/// Okabe-Ito colors plus black and white: injective, color-blind safe.
pub const PALETTE: [[u8; 3]; 10] = [
    [230, 159, 0],
    [86, 180, 233],
    [0, 158, 115],
    [240, 228, 66],
    [0, 114, 178],
    [213, 94, 0],
    [204, 121, 167],
    [153, 153, 153],
    [0, 0, 0],
    [255, 255, 255],
];

/// P6 pixmap, one pixel per cell: rows are inlines, columns crosslines.
pub fn render_map(map: &FaciesMap) -> Result<Vec<u8>> {
    if map.max_label() >= PALETTE.len() {
        return Err(Error::LabelOutOfRange {
            label: map.max_label(),
            palette: PALETTE.len(),
        });
    }
    let mut out = Vec::with_capacity(32 + 3 * map.inlines * map.crosslines);
    out.extend_from_slice(format!("P6\n{} {}\n255\n", map.crosslines, map.inlines).as_bytes());
    for il in 0..map.inlines {
        for xl in 0..map.crosslines {
            out.extend_from_slice(&PALETTE[map.get(il, xl)]);
        }
    }
    Ok(out)
}

/// Inverts [`render_map`]; colors outside the palette are rejected.
pub fn parse_map(bytes: &[u8]) -> Result<FaciesMap> {
    let mut fields = Vec::new();
    let mut pos = 0;
    // P6 header: three whitespace-separated tokens after the magic
    while fields.len() < 4 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            break;
        }
        fields.push(
            std::str::from_utf8(&bytes[start..pos])
                .map_err(|_| bad("pixmap", "non-ASCII header"))?,
        );
    }
    if fields.len() != 4 || fields[0] != "P6" || fields[3] != "255" {
        return Err(bad("pixmap", format!("bad header {fields:?}")));
    }
    let width: usize = fields[1]
        .parse()
        .map_err(|_| bad("pixmap", "bad width"))?;
    let height: usize = fields[2]
        .parse()
        .map_err(|_| bad("pixmap", "bad height"))?;
    pos += 1; // the single whitespace byte after maxval
    let payload = bytes
        .get(pos..)
        .ok_or_else(|| bad("pixmap", "missing payload"))?;
    if payload.len() != 3 * width * height {
        return Err(bad(
            "pixmap",
            format!("payload {} bytes for {width}x{height}", payload.len()),
        ));
    }
    let mut labels = Vec::with_capacity(width * height);
    for px in payload.chunks_exact(3) {
        let label = PALETTE
            .iter()
            .position(|c| c == px)
            .ok_or_else(|| bad("pixmap", format!("color {px:?} not in palette")))?;
        labels.push(label);
    }
    FaciesMap::new(height, width, labels)
}

pub fn write_map(path: &Path, map: &FaciesMap) -> Result<()> {
    fs::write(path, render_map(map)?)?;
    Ok(())
}

pub fn read_map(path: &Path) -> Result<FaciesMap> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_map(&bytes)
}
