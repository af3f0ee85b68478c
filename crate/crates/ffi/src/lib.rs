//! C ABI over `mmfuse`.
//!
//! Every fallible function returns an [`MmfStatus`]; on failure the message is
//! available from [`mmf_last_error`] on the same thread. Objects are opaque
//! handles created by `*_new`/`*_load` and released by the matching `*_free`.
//! Tensors are row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use mmfuse::audio::{trailer_spectrogram, AudioClip};
use mmfuse::encoders::Encoder;
use mmfuse::fusion::{fuse_matrices, FusionModel};
use mmfuse::{metrics, Error, Tensor};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    NonFinite = 4,
    NoPositives = 5,
    Io = 6,
    Parse = 7,
    Audio = 8,
    Panic = 99,
}

/// Opaque tensor.
pub struct MmfTensor(Tensor);

/// Opaque trained sequence encoder.
pub struct MmfEncoder(Encoder);

/// Opaque fusion model.
pub struct MmfFusion(FusionModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MmfStatus {
    match e {
        Error::Dimension(_) | Error::EmptySequence(_) | Error::SequenceTooShort { .. } => {
            MmfStatus::Dimension
        }
        Error::NonFinite(_) => MmfStatus::NonFinite,
        Error::NoPositives => MmfStatus::NoPositives,
        Error::Io { .. } => MmfStatus::Io,
        Error::Parse { .. } | Error::TensorFormat { .. } | Error::Serde(_) => MmfStatus::Parse,
        Error::Audio(_) => MmfStatus::Audio,
        _ => MmfStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MmfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MmfStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            MmfStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            MmfStatus::InvalidArgument
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MmfStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Arg("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn write_vec(v: &[f64], out: *mut f64, cap: usize) -> Result<(), Fail> {
    if cap < v.len() {
        return Err(Fail::Arg(format!(
            "output buffer holds {cap} values, need {}",
            v.len()
        )));
    }
    if v.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    ptr::copy_nonoverlapping(v.as_ptr(), out, v.len());
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn mmf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mmf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `data` (product of `shape` values) into a new tensor.
///
/// # Safety
/// `shape` must point to `rank` values and `data` to their product.
#[no_mangle]
pub unsafe extern "C" fn mmf_tensor_new(
    shape: *const usize,
    rank: usize,
    data: *const f64,
    out: *mut *mut MmfTensor,
) -> MmfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let shape = slice(shape, rank, "shape")?.to_vec();
        let n = shape.iter().product();
        let data = slice(data, n, "data")?.to_vec();
        *out = boxed(MmfTensor(Tensor::new(shape, data)?));
        Ok(())
    })
}

/// # Safety
/// `t` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mmf_tensor_free(t: *mut MmfTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// # Safety
/// `t` must be a live tensor handle.
#[no_mangle]
pub unsafe extern "C" fn mmf_tensor_rank(t: *const MmfTensor) -> usize {
    t.as_ref().map_or(0, |t| t.0.rank())
}

/// # Safety
/// `t` must be a live tensor handle.
#[no_mangle]
pub unsafe extern "C" fn mmf_tensor_numel(t: *const MmfTensor) -> usize {
    t.as_ref().map_or(0, |t| t.0.numel())
}

/// Writes the shape into `out` (capacity `cap`).
///
/// # Safety
/// `t` must be a live tensor handle and `out` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn mmf_tensor_shape(
    t: *const MmfTensor,
    out: *mut usize,
    cap: usize,
) -> MmfStatus {
    guard(|| {
        let shape = borrow(t, "tensor")?.0.shape();
        if cap < shape.len() {
            return Err(Fail::Arg(format!(
                "shape buffer holds {cap}, need {}",
                shape.len()
            )));
        }
        if !shape.is_empty() {
            if out.is_null() {
                return Err(Fail::Null("out"));
            }
            ptr::copy_nonoverlapping(shape.as_ptr(), out, shape.len());
        }
        Ok(())
    })
}

/// Borrowed pointer to the tensor values; valid while the handle lives.
///
/// # Safety
/// `t` must be a live tensor handle.
#[no_mangle]
pub unsafe extern "C" fn mmf_tensor_data(t: *const MmfTensor) -> *const f64 {
    t.as_ref().map_or(ptr::null(), |t| t.0.data().as_ptr())
}

/// Average precision of one class. `labels` holds 0/1 bytes.
///
/// # Safety
/// `scores` and `labels` must each point to `n` values.
#[no_mangle]
pub unsafe extern "C" fn mmf_average_precision(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> MmfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let s = slice(scores, n, "scores")?;
        let y: Vec<bool> = slice(labels, n, "labels")?
            .iter()
            .map(|&b| b != 0)
            .collect();
        *out = metrics::average_precision(s, &y)?;
        Ok(())
    })
}

/// Which aggregate [`mmf_map`] computes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmfAverage {
    /// Mean of per-class AP over classes with a positive.
    Macro = 0,
    /// AP of all (sample, class) pairs pooled.
    Micro = 1,
    /// Mean of per-sample AP over samples with a positive.
    Sample = 2,
}

/// Aggregate average precision of `[N x K]` scores against 0/1 labels.
///
/// # Safety
/// `scores` and `labels` must be live tensor handles.
#[no_mangle]
pub unsafe extern "C" fn mmf_map(
    scores: *const MmfTensor,
    labels: *const MmfTensor,
    average: MmfAverage,
    out: *mut f64,
) -> MmfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let s = &borrow(scores, "scores")?.0;
        let y = &borrow(labels, "labels")?.0;
        *out = match average {
            MmfAverage::Macro => metrics::macro_map(s, y)?,
            MmfAverage::Micro => metrics::micro_ap(s, y)?,
            MmfAverage::Sample => metrics::sample_ap(s, y)?,
        };
        Ok(())
    })
}

/// Four-clip log-mel spectrogram `[4 x 128 x T]` of mono samples.
///
/// # Safety
/// `samples` must point to `n` values.
#[no_mangle]
pub unsafe extern "C" fn mmf_spectrogram(
    samples: *const f32,
    n: usize,
    sample_rate: u32,
    seed: u64,
    out: *mut *mut MmfTensor,
) -> MmfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let samples = slice(samples, n, "samples")?
            .iter()
            .map(|&v| v as f64)
            .collect();
        let audio = AudioClip::new(samples, sample_rate)?;
        *out = boxed(MmfTensor(trailer_spectrogram(&audio, seed)?));
        Ok(())
    })
}

/// Same as [`mmf_spectrogram`] for a WAV file.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mmf_spectrogram_wav(
    path: *const c_char,
    seed: u64,
    out: *mut *mut MmfTensor,
) -> MmfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let audio = AudioClip::read_wav(&path_arg(path)?)?;
        *out = boxed(MmfTensor(trailer_spectrogram(&audio, seed)?));
        Ok(())
    })
}

/// Loads an encoder saved by `mmfuse train` (`model.json`).
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mmf_encoder_load(
    path: *const c_char,
    out: *mut *mut MmfEncoder,
) -> MmfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = boxed(MmfEncoder(Encoder::load(&path_arg(path)?)?));
        Ok(())
    })
}

/// # Safety
/// `e` must be NULL or a live encoder handle.
#[no_mangle]
pub unsafe extern "C" fn mmf_encoder_free(e: *mut MmfEncoder) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// # Safety
/// `e` must be a live encoder handle.
#[no_mangle]
pub unsafe extern "C" fn mmf_encoder_num_classes(e: *const MmfEncoder) -> usize {
    e.as_ref().map_or(0, |e| e.0.num_classes())
}

/// Logits of one `[T x D]` feature sequence, written to `out` (capacity `cap`).
///
/// # Safety
/// `e` and `x` must be live handles; `out` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn mmf_encoder_logits(
    e: *const MmfEncoder,
    x: *const MmfTensor,
    out: *mut f64,
    cap: usize,
) -> MmfStatus {
    guard(|| {
        let e = &borrow(e, "encoder")?.0;
        let logits = e.logits(&borrow(x, "x")?.0)?;
        write_vec(&logits, out, cap)
    })
}

/// Loads a fusion model saved by `mmfuse fuse` (`fusion.json`).
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mmf_fusion_load(
    path: *const c_char,
    out: *mut *mut MmfFusion,
) -> MmfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = boxed(MmfFusion(FusionModel::load(&path_arg(path)?)?));
        Ok(())
    })
}

/// Fusion model with explicit raw weights `[K x M]`; modalities are named
/// `m0..`, classes `c0..`.
///
/// # Safety
/// `weights` must be a live tensor handle.
#[no_mangle]
pub unsafe extern "C" fn mmf_fusion_from_weights(
    weights: *const MmfTensor,
    out: *mut *mut MmfFusion,
) -> MmfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let w = &borrow(weights, "weights")?.0;
        let (k, m) = w.as_matrix()?;
        let model = FusionModel::with_weights(
            (0..m).map(|i| format!("m{i}")).collect(),
            (0..k).map(|j| format!("c{j}")).collect(),
            w.clone(),
        )?;
        *out = boxed(MmfFusion(model));
        Ok(())
    })
}

/// # Safety
/// `f` must be NULL or a live fusion handle.
#[no_mangle]
pub unsafe extern "C" fn mmf_fusion_free(f: *mut MmfFusion) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// # Safety
/// `f` must be a live fusion handle.
#[no_mangle]
pub unsafe extern "C" fn mmf_fusion_num_classes(f: *const MmfFusion) -> usize {
    f.as_ref().map_or(0, |f| f.0.num_classes())
}

/// # Safety
/// `f` must be a live fusion handle.
#[no_mangle]
pub unsafe extern "C" fn mmf_fusion_num_modalities(f: *const MmfFusion) -> usize {
    f.as_ref().map_or(0, |f| f.0.modalities.len())
}

/// Attention weights `[K x M]`; each row sums to one.
///
/// # Safety
/// `f` must be a live fusion handle.
#[no_mangle]
pub unsafe extern "C" fn mmf_fusion_alpha(
    f: *const MmfFusion,
    out: *mut *mut MmfTensor,
) -> MmfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = boxed(MmfTensor(borrow(f, "fusion")?.0.alpha()?));
        Ok(())
    })
}

/// Fuses `n` score matrices `[B x K]`, given in the model's modality order.
///
/// # Safety
/// `f` must be a live fusion handle and `scores` must point to `n` live
/// tensor handles.
#[no_mangle]
pub unsafe extern "C" fn mmf_fusion_fuse(
    f: *const MmfFusion,
    scores: *const *const MmfTensor,
    n: usize,
    out: *mut *mut MmfTensor,
) -> MmfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let model = &borrow(f, "fusion")?.0;
        let mats = slice(scores, n, "scores")?
            .iter()
            .map(|&p| borrow(p, "scores[i]").map(|t| t.0.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        if mats.is_empty() {
            return Err(Fail::Arg("no score matrices".into()));
        }
        *out = boxed(MmfTensor(fuse_matrices(&mats, &model.alpha()?)?));
        Ok(())
    })
}
