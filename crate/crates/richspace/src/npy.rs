//! NPY v1.0 reader and writer for little-endian `f32`, C-order arrays.
//!
//! Headers are written exactly as numpy 2.x writes them (including the
//! trailing growth padding), so files are byte-identical to `np.save`.

use std::fs;
use std::io::Write;
use std::path::Path;

use richspace_core::{Matrix, VideoTensor};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;
/// Room numpy leaves after the dict so the leading axis can grow in place.
const GROWTH_AXIS_MAX_DIGITS: usize = 21;

#[derive(Debug, thiserror::Error)]
pub enum NpyError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an NPY file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported NPY version {0}.{1}; only 1.0 is read")]
    UnsupportedVersion(u8, u8),
    #[error("unsupported dtype {0:?}; expected '<f4'")]
    UnsupportedDtype(String),
    #[error("fortran-order arrays are not supported")]
    UnsupportedOrder,
    #[error("expected a {expected}-D array, found shape {found:?}")]
    DimError { expected: usize, found: Vec<usize> },
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("payload holds {found} bytes, shape needs {expected}")]
    Truncated { expected: usize, found: usize },
    #[error("value {0} is not representable as a finite f32")]
    NotRepresentable(f64),
    #[error(transparent)]
    Core(#[from] richspace_core::Error),
}

/// A decoded array: shape plus values widened to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Tensor kinds the interchange format carries.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Embedding(Matrix),
    Video(VideoTensor),
}

impl Tensor {
    pub fn shape(&self) -> Vec<usize> {
        match self {
            Tensor::Embedding(m) => vec![m.rows(), m.cols()],
            Tensor::Video(v) => v.shape().to_vec(),
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            Tensor::Embedding(m) => m.as_slice(),
            Tensor::Video(v) => v.as_slice(),
        }
    }
}

impl From<Matrix> for Tensor {
    fn from(m: Matrix) -> Self {
        Tensor::Embedding(m)
    }
}

impl From<VideoTensor> for Tensor {
    fn from(v: VideoTensor) -> Self {
        Tensor::Video(v)
    }
}

fn shape_repr(shape: &[usize]) -> String {
    match shape {
        [] => "()".to_string(),
        [only] => format!("({only},)"),
        _ => {
            let parts: Vec<String> = shape.iter().map(usize::to_string).collect();
            format!("({})", parts.join(", "))
        }
    }
}

/// The complete header block: magic, version, length and padded dict.
pub fn header_bytes(shape: &[usize]) -> Vec<u8> {
    let mut dict = format!(
        "{{'descr': '<f4', 'fortran_order': False, 'shape': {}, }}",
        shape_repr(shape)
    );
    if let Some(first) = shape.first() {
        let digits = first.to_string().len();
        dict.push_str(&" ".repeat(GROWTH_AXIS_MAX_DIGITS.saturating_sub(digits)));
    }
    // 6 magic + 2 version + 2 length, then the dict and its newline.
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = ALIGN - unpadded % ALIGN;
    dict.push_str(&" ".repeat(pad));
    dict.push('\n');

    let mut out = Vec::with_capacity(10 + dict.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

/// Serialize `values` with the given shape into NPY bytes.
pub fn encode(shape: &[usize], values: &[f64]) -> Result<Vec<u8>, NpyError> {
    let mut out = header_bytes(shape);
    out.reserve(values.len() * 4);
    for &v in values {
        let narrowed = v as f32;
        if !narrowed.is_finite() {
            return Err(NpyError::NotRepresentable(v));
        }
        out.extend_from_slice(&narrowed.to_le_bytes());
    }
    Ok(out)
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<(), NpyError> {
    let bytes = encode(&tensor.shape(), tensor.values())?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

/// Value of `key` in the header dict, as raw text up to the next top-level comma.
fn dict_value<'a>(dict: &'a str, key: &str) -> Result<&'a str, NpyError> {
    let needle = format!("'{key}'");
    let start = dict
        .find(&needle)
        .ok_or_else(|| NpyError::BadHeader(format!("missing key {key}")))?;
    let rest = dict[start + needle.len()..].trim_start();
    let rest = rest
        .strip_prefix(':')
        .ok_or_else(|| NpyError::BadHeader(format!("no ':' after {key}")))?
        .trim_start();
    let mut depth = 0usize;
    for (i, ch) in rest.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' | '}' if depth == 0 => return Ok(rest[..i].trim()),
            _ => {}
        }
    }
    Err(NpyError::BadHeader(format!("unterminated value for {key}")))
}

fn parse_shape(text: &str) -> Result<Vec<usize>, NpyError> {
    let inner = text
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| NpyError::BadHeader(format!("shape {text:?} is not a tuple")))?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| NpyError::BadHeader(format!("bad dimension {p:?}")))
        })
        .collect()
}

/// Parse NPY bytes into shape and widened values.
pub fn decode(bytes: &[u8]) -> Result<NpyArray, NpyError> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(NpyError::BadMagic);
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(NpyError::UnsupportedVersion(major, minor));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let body_start = 10 + header_len;
    let header = bytes
        .get(10..body_start)
        .ok_or_else(|| NpyError::BadHeader("header runs past end of file".into()))?;
    let dict = std::str::from_utf8(header)
        .map_err(|_| NpyError::BadHeader("header is not ASCII".into()))?;

    let descr = dict_value(dict, "descr")?.trim_matches(|c| c == '\'' || c == '"');
    if descr != "<f4" {
        return Err(NpyError::UnsupportedDtype(descr.to_string()));
    }
    match dict_value(dict, "fortran_order")? {
        "False" => {}
        "True" => return Err(NpyError::UnsupportedOrder),
        other => return Err(NpyError::BadHeader(format!("fortran_order {other:?}"))),
    }
    let shape = parse_shape(dict_value(dict, "shape")?)?;

    let count: usize = shape.iter().product();
    let payload = &bytes[body_start..];
    if payload.len() != count * 4 {
        return Err(NpyError::Truncated {
            expected: count * 4,
            found: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Ok(NpyArray { shape, data })
}

pub fn read_array(path: impl AsRef<Path>) -> Result<NpyArray, NpyError> {
    decode(&fs::read(path)?)
}

/// Read a 2-D embedding or 4-D video tensor.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor, NpyError> {
    let array = read_array(path)?;
    match array.shape.len() {
        2 => Ok(Tensor::Embedding(Matrix::new(
            array.shape[0],
            array.shape[1],
            array.data,
        )?)),
        4 => {
            let s = &array.shape;
            Ok(Tensor::Video(VideoTensor::new(
                s[0], s[1], s[2], s[3], array.data,
            )?))
        }
        _ => Err(NpyError::DimError {
            expected: 2,
            found: array.shape,
        }),
    }
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix, NpyError> {
    match read_tensor(path)? {
        Tensor::Embedding(m) => Ok(m),
        Tensor::Video(v) => Err(NpyError::DimError {
            expected: 2,
            found: v.shape().to_vec(),
        }),
    }
}

pub fn read_video(path: impl AsRef<Path>) -> Result<VideoTensor, NpyError> {
    match read_tensor(path)? {
        Tensor::Video(v) => Ok(v),
        Tensor::Embedding(m) => Err(NpyError::DimError {
            expected: 4,
            found: vec![m.rows(), m.cols()],
        }),
    }
}
