//! Single-file NIfTI-1 reader and writer for label maps.
//!
//! Reading accepts either byte order, optional gzip compression (detected from
//! the stream's magic bytes) and the integer-valued datatypes uint8, int16,
//! uint16, int32 and float32. Writing always produces little-endian uint8 with
//! both sform and qform populated.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{unravel, Affine, LabelVolume, VolumeError, MAX_LABEL};

pub const NIFTI1_HEADER_SIZE: usize = 348;
const MAGIC_SINGLE_FILE: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";
const MIN_VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_UINT16: i16 = 512;

const UNITS_MM: u8 = 2;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Endian {
    Little,
    Big,
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl HeaderReader<'_> {
    fn i16(&self, off: usize) -> i16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        match self.endian {
            Endian::Little => i16::from_le_bytes(b),
            Endian::Big => i16::from_be_bytes(b),
        }
    }

    fn f32(&self, off: usize) -> f32 {
        let b: [u8; 4] = self.bytes[off..off + 4].try_into().unwrap();
        match self.endian {
            Endian::Little => f32::from_le_bytes(b),
            Endian::Big => f32::from_be_bytes(b),
        }
    }
}

/// Header fields needed to interpret a label map.
#[derive(Debug, Clone)]
struct Header {
    endian: Endian,
    dims: [usize; 3],
    datatype: i16,
    pixdim: [f32; 8],
    vox_offset: usize,
    scl_slope: f32,
    scl_inter: f32,
    xyzt_units: u8,
    qform_code: i16,
    sform_code: i16,
    quatern: [f32; 3],
    qoffset: [f32; 3],
    srow: [[f32; 4]; 3],
}

fn parse_header(bytes: &[u8]) -> Result<Header, VolumeError> {
    if bytes.len() < NIFTI1_HEADER_SIZE {
        return Err(VolumeError::Format(format!(
            "file is {} bytes, shorter than a NIfTI-1 header",
            bytes.len()
        )));
    }
    let first: [u8; 4] = bytes[0..4].try_into().unwrap();
    let endian = if i32::from_le_bytes(first) == NIFTI1_HEADER_SIZE as i32 {
        Endian::Little
    } else if i32::from_be_bytes(first) == NIFTI1_HEADER_SIZE as i32 {
        Endian::Big
    } else {
        return Err(VolumeError::Format(format!(
            "sizeof_hdr is neither little- nor big-endian 348 (bytes {first:?})"
        )));
    };
    let magic = &bytes[344..348];
    if magic == MAGIC_PAIR {
        return Err(VolumeError::Format(
            "header/image pair layout (ni1) is not supported; expected a single .nii file".into(),
        ));
    }
    if magic != MAGIC_SINGLE_FILE {
        return Err(VolumeError::Format(format!("bad magic {magic:?}")));
    }

    let r = HeaderReader { bytes, endian };
    let ndim = r.i16(40);
    if !(1..=7).contains(&ndim) {
        return Err(VolumeError::Format(format!("dim[0] = {ndim} outside 1..=7")));
    }
    let mut dims = [1usize; 3];
    for k in 1..=ndim as usize {
        let d = r.i16(40 + 2 * k);
        if d <= 0 {
            return Err(VolumeError::Format(format!("dim[{k}] = {d} is not positive")));
        }
        if k <= 3 {
            dims[k - 1] = d as usize;
        } else if d != 1 {
            return Err(VolumeError::Format(format!(
                "dim[{k}] = {d}; only 3D label maps are supported"
            )));
        }
    }

    let datatype = r.i16(70);
    let bitpix = r.i16(72);
    let expected_bitpix = match datatype {
        DT_UINT8 => 8,
        DT_INT16 | DT_UINT16 => 16,
        DT_INT32 | DT_FLOAT32 => 32,
        other => {
            return Err(VolumeError::UnsupportedDatatype {
                code: other,
                reason: "label maps must be uint8, int16, uint16, int32 or float32".into(),
            })
        }
    };
    if bitpix != expected_bitpix {
        return Err(VolumeError::Format(format!(
            "bitpix {bitpix} does not match datatype {datatype}"
        )));
    }

    let mut pixdim = [0f32; 8];
    for (k, p) in pixdim.iter_mut().enumerate() {
        *p = r.f32(76 + 4 * k);
    }
    let vox_offset_f = r.f32(108);
    if !vox_offset_f.is_finite() || vox_offset_f.fract() != 0.0 || vox_offset_f < MIN_VOX_OFFSET as f32 {
        return Err(VolumeError::Format(format!(
            "vox_offset {vox_offset_f} must be an integer >= {MIN_VOX_OFFSET}"
        )));
    }

    let mut srow = [[0f32; 4]; 3];
    for (i, row) in srow.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = r.f32(280 + 16 * i + 4 * j);
        }
    }

    Ok(Header {
        endian,
        dims,
        datatype,
        pixdim,
        vox_offset: vox_offset_f as usize,
        scl_slope: r.f32(112),
        scl_inter: r.f32(116),
        xyzt_units: bytes[123],
        qform_code: r.i16(252),
        sform_code: r.i16(254),
        quatern: [r.f32(256), r.f32(260), r.f32(264)],
        qoffset: [r.f32(268), r.f32(272), r.f32(276)],
        srow,
    })
}

fn unit_scale(xyzt_units: u8) -> f64 {
    match xyzt_units & 0x07 {
        1 => 1000.0, // metres
        3 => 1e-3,   // microns
        _ => 1.0,
    }
}

/// Voxel-to-world affine, sform first, then qform, then the pixdim diagonal.
fn header_affine(h: &Header) -> Affine {
    let mut a = [[0.0; 4]; 4];
    a[3][3] = 1.0;
    if h.sform_code > 0 {
        for (i, row) in h.srow.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                a[i][j] = f64::from(*v);
            }
        }
    } else if h.qform_code > 0 {
        let [b, c, d] = h.quatern.map(f64::from);
        let (mut b, mut c, mut d) = (b, c, d);
        let mut aq = 1.0 - (b * b + c * c + d * d);
        if aq < 1e-7 {
            let norm = 1.0 / (b * b + c * c + d * d).sqrt();
            b *= norm;
            c *= norm;
            d *= norm;
            aq = 0.0;
        } else {
            aq = aq.sqrt();
        }
        let rot = [
            [aq * aq + b * b - c * c - d * d, 2.0 * (b * c - aq * d), 2.0 * (b * d + aq * c)],
            [2.0 * (b * c + aq * d), aq * aq + c * c - b * b - d * d, 2.0 * (c * d - aq * b)],
            [2.0 * (b * d - aq * c), 2.0 * (c * d + aq * b), aq * aq + d * d - c * c - b * b],
        ];
        let qfac = if h.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let scale = [
            f64::from(h.pixdim[1]),
            f64::from(h.pixdim[2]),
            f64::from(h.pixdim[3]) * qfac,
        ];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] = rot[i][j] * scale[j];
            }
            a[i][3] = f64::from(h.qoffset[i]);
        }
    } else {
        for k in 0..3 {
            a[k][k] = f64::from(h.pixdim[k + 1]);
        }
    }
    let s = unit_scale(h.xyzt_units);
    if s != 1.0 {
        for row in a.iter_mut().take(3) {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
    }
    a
}

fn decode_voxels(h: &Header, data: &[u8]) -> Result<Vec<u8>, VolumeError> {
    let n: usize = h.dims.iter().product();
    let width = match h.datatype {
        DT_UINT8 => 1,
        DT_INT16 | DT_UINT16 => 2,
        _ => 4,
    };
    let needed = n * width;
    if data.len() < needed {
        return Err(VolumeError::Format(format!(
            "voxel data truncated: need {needed} bytes, found {}",
            data.len()
        )));
    }

    let slope = f64::from(h.scl_slope);
    let inter = f64::from(h.scl_inter);
    let scaled = slope.is_finite() && slope != 0.0 && !(slope == 1.0 && inter == 0.0);

    let raw = |i: usize| -> f64 {
        let b = &data[i * width..(i + 1) * width];
        macro_rules! read {
            ($t:ty) => {{
                let arr = b.try_into().unwrap();
                match h.endian {
                    Endian::Little => <$t>::from_le_bytes(arr),
                    Endian::Big => <$t>::from_be_bytes(arr),
                }
            }};
        }
        match h.datatype {
            DT_UINT8 => f64::from(b[0]),
            DT_INT16 => f64::from(read!(i16)),
            DT_UINT16 => f64::from(read!(u16)),
            DT_INT32 => f64::from(read!(i32)),
            _ => f64::from(read!(f32)),
        }
    };

    let mut voxels = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = raw(i);
        if scaled {
            v = v * slope + inter;
        }
        if !v.is_finite() || v.fract() != 0.0 {
            return Err(VolumeError::UnsupportedDatatype {
                code: h.datatype,
                reason: format!("voxel {:?} holds non-integer value {v}", unravel(h.dims, i)),
            });
        }
        if v < 0.0 || v > f64::from(MAX_LABEL) {
            return Err(VolumeError::InvalidLabel {
                value: v,
                index: unravel(h.dims, i),
            });
        }
        voxels.push(v as u8);
    }
    Ok(voxels)
}

/// Decodes an in-memory NIfTI-1 file, gunzipping first when the bytes carry a
/// gzip signature.
pub fn decode_nifti(bytes: &[u8]) -> Result<LabelVolume, VolumeError> {
    let inflated;
    let bytes = if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut buf = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut buf)
            .map_err(|e| VolumeError::Format(format!("gzip stream: {e}")))?;
        inflated = buf;
        &inflated[..]
    } else {
        bytes
    };

    let h = parse_header(bytes)?;
    let voxels = decode_voxels(&h, bytes.get(h.vox_offset..).unwrap_or(&[]))?;
    let unit = unit_scale(h.xyzt_units);
    let mut spacing = [0.0; 3];
    for k in 0..3 {
        spacing[k] = f64::from(h.pixdim[k + 1]).abs() * unit;
        if !spacing[k].is_finite() || spacing[k] <= 0.0 {
            return Err(VolumeError::Format(format!(
                "pixdim[{}] = {} is not a positive spacing",
                k + 1,
                h.pixdim[k + 1]
            )));
        }
    }
    LabelVolume::new(h.dims, spacing, header_affine(&h), voxels)
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<LabelVolume, VolumeError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| VolumeError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    decode_nifti(&bytes)
}

/// Rotation part of a (possibly scaled) affine as a NIfTI quaternion
/// `(b, c, d)` plus `qfac`.
fn affine_to_quaternion(a: &Affine) -> ([f32; 3], f32) {
    let mut r = [[0.0f64; 3]; 3];
    for j in 0..3 {
        let norm = (a[0][j] * a[0][j] + a[1][j] * a[1][j] + a[2][j] * a[2][j]).sqrt();
        for i in 0..3 {
            r[i][j] = if norm > 0.0 { a[i][j] / norm } else if i == j { 1.0 } else { 0.0 };
        }
    }
    let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
        - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    let qfac = if det < 0.0 {
        for row in r.iter_mut() {
            row[2] = -row[2];
        }
        -1.0
    } else {
        1.0
    };

    let trace = r[0][0] + r[1][1] + r[2][2] + 1.0;
    let (qa, mut b, mut c, mut d);
    if trace > 0.5 {
        qa = 0.5 * trace.sqrt();
        b = 0.25 * (r[2][1] - r[1][2]) / qa;
        c = 0.25 * (r[0][2] - r[2][0]) / qa;
        d = 0.25 * (r[1][0] - r[0][1]) / qa;
    } else {
        let xd = 1.0 + r[0][0] - (r[1][1] + r[2][2]);
        let yd = 1.0 + r[1][1] - (r[0][0] + r[2][2]);
        let zd = 1.0 + r[2][2] - (r[0][0] + r[1][1]);
        if xd > 1.0 {
            b = 0.5 * xd.sqrt();
            c = 0.25 * (r[0][1] + r[1][0]) / b;
            d = 0.25 * (r[0][2] + r[2][0]) / b;
            qa = 0.25 * (r[2][1] - r[1][2]) / b;
        } else if yd > 1.0 {
            c = 0.5 * yd.sqrt();
            b = 0.25 * (r[0][1] + r[1][0]) / c;
            d = 0.25 * (r[1][2] + r[2][1]) / c;
            qa = 0.25 * (r[0][2] - r[2][0]) / c;
        } else {
            d = 0.5 * zd.sqrt();
            b = 0.25 * (r[0][2] + r[2][0]) / d;
            c = 0.25 * (r[1][2] + r[2][1]) / d;
            qa = 0.25 * (r[1][0] - r[0][1]) / d;
        }
        if qa < 0.0 {
            b = -b;
            c = -c;
            d = -d;
        }
    }
    ([b as f32, c as f32, d as f32], qfac)
}

/// Serialises a volume as an uncompressed little-endian NIfTI-1 file.
pub fn encode_nifti(vol: &LabelVolume) -> Result<Vec<u8>, VolumeError> {
    let dims = vol.dims();
    if dims.iter().any(|&d| d > i16::MAX as usize) {
        return Err(VolumeError::Invalid(format!(
            "dimensions {dims:?} exceed the NIfTI-1 limit of {}",
            i16::MAX
        )));
    }
    let mut h = vec![0u8; MIN_VOX_OFFSET];
    let put_i16 = |h: &mut [u8], off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut [u8], off: usize, v: f32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());

    h[0..4].copy_from_slice(&(NIFTI1_HEADER_SIZE as i32).to_le_bytes());
    put_i16(&mut h, 40, 3);
    for (k, &d) in dims.iter().enumerate() {
        put_i16(&mut h, 42 + 2 * k, d as i16);
    }
    for k in 4..8 {
        put_i16(&mut h, 40 + 2 * k, 1);
    }
    put_i16(&mut h, 70, DT_UINT8);
    put_i16(&mut h, 72, 8);

    let affine = vol.affine();
    let (quatern, qfac) = affine_to_quaternion(affine);
    put_f32(&mut h, 76, qfac);
    for (k, s) in vol.spacing().iter().enumerate() {
        put_f32(&mut h, 80 + 4 * k, *s as f32);
    }
    for k in 4..8 {
        put_f32(&mut h, 76 + 4 * k, 1.0);
    }
    put_f32(&mut h, 108, MIN_VOX_OFFSET as f32);
    put_f32(&mut h, 112, 1.0);
    put_f32(&mut h, 116, 0.0);
    h[123] = UNITS_MM;
    put_f32(&mut h, 124, f32::from(MAX_LABEL)); // cal_max
    put_i16(&mut h, 252, 1);
    put_i16(&mut h, 254, 1);
    for (k, q) in quatern.iter().enumerate() {
        put_f32(&mut h, 256 + 4 * k, *q);
    }
    for k in 0..3 {
        put_f32(&mut h, 268 + 4 * k, affine[k][3] as f32);
    }
    for i in 0..3 {
        for j in 0..4 {
            put_f32(&mut h, 280 + 16 * i + 4 * j, affine[i][j] as f32);
        }
    }
    h[344..348].copy_from_slice(MAGIC_SINGLE_FILE);

    h.extend_from_slice(vol.voxels());
    Ok(h)
}

/// Writes `vol` to `path`, gzip-compressed when the name ends in `.gz`.
pub fn write_volume(vol: &LabelVolume, path: impl AsRef<Path>) -> Result<(), VolumeError> {
    let path = path.as_ref();
    let bytes = encode_nifti(vol)?;
    let werr = |source| VolumeError::Write {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(werr)?;
    let gz = path
        .file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with(".gz"));
    if gz {
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::fast());
        enc.write_all(&bytes).map_err(werr)?;
        enc.finish().map_err(werr)?.flush().map_err(werr)?;
    } else {
        let mut w = BufWriter::new(file);
        w.write_all(&bytes).map_err(werr)?;
        w.flush().map_err(werr)?;
    }
    Ok(())
}
