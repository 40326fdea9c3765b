use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use roipca_ffi::*;

fn data(rows: usize, cols: usize) -> Vec<f64> {
    // Deterministic, well-spread rows with a dominant first coordinate.
    (0..rows * cols)
        .map(|k| {
            let (i, j) = (k / cols, k % cols);
            let w = 1.0 / (j + 1) as f64;
            w * ((i * 7 + j * 13) as f64 * 0.37).sin() * (1.0 + i as f64 * 0.01)
        })
        .collect()
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        roipca_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn new_model(rows: usize, cols: usize, m: usize, opts: Option<&RoipcaOptions>) -> (RoipcaStatus, *mut RoipcaModel) {
    let x = data(rows, cols);
    let mut model = ptr::null_mut();
    let status = unsafe {
        roipca_model_new(x.as_ptr(), rows, cols, m, opts.map_or(ptr::null(), |o| o as *const _), &mut model)
    };
    (status, model)
}

#[test]
fn lifecycle() {
    let (status, model) = new_model(20, 6, 3, None);
    assert_eq!(status, RoipcaStatus::Ok);
    unsafe {
        assert_eq!(roipca_model_dim(model), 6);
        assert_eq!(roipca_model_components_count(model), 3);
        assert_eq!(roipca_model_samples(model), 20);
        let extra = data(10, 6);
        for row in extra.chunks(6) {
            assert_eq!(roipca_model_ingest(model, row.as_ptr(), 6), RoipcaStatus::Ok);
        }
        assert_eq!(roipca_model_samples(model), 30);
        assert_eq!(roipca_model_recenter(model), RoipcaStatus::Ok);

        let mut values = [0.0; 3];
        let mut vectors = [0.0; 18];
        let s = roipca_model_components(model, values.as_mut_ptr(), 3, vectors.as_mut_ptr(), 18);
        assert_eq!(s, RoipcaStatus::Ok);
        assert!(values[0] >= values[1] && values[1] >= values[2]);
        for j in 0..3 {
            let norm: f64 = vectors[j * 6..(j + 1) * 6].iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-10);
        }
        roipca_model_free(model);
    }
}

#[test]
fn second_order_options() {
    let mut opts = roipca_options_default();
    opts.algorithm = RoipcaAlgorithm::CovarianceBacked;
    opts.order = 2;
    opts.mu = RoipcaMu::Star;
    let (status, model) = new_model(20, 5, 2, Some(&opts));
    assert_eq!(status, RoipcaStatus::Ok);
    unsafe {
        let x = data(3, 5);
        assert_eq!(roipca_model_ingest(model, x.as_ptr(), 5), RoipcaStatus::Ok);
        roipca_model_free(model);
    }
}

#[test]
fn invalid_options_are_reported() {
    let mut opts = roipca_options_default();
    opts.order = 2;
    let (status, model) = new_model(20, 5, 2, Some(&opts));
    assert_eq!(status, RoipcaStatus::InvalidArgument);
    assert!(model.is_null());
    assert!(!last_error().is_empty());

    opts.order = 7;
    let (status, _) = new_model(20, 5, 2, Some(&opts));
    assert_eq!(status, RoipcaStatus::InvalidArgument);
    assert!(last_error().contains("order"));
}

#[test]
fn errors_map_to_status_codes() {
    let (status, model) = new_model(2, 5, 3, None);
    assert_eq!(status, RoipcaStatus::InsufficientData);
    assert!(model.is_null());

    let (_, model) = new_model(20, 5, 2, None);
    unsafe {
        let short = [1.0, 2.0];
        assert_eq!(roipca_model_ingest(model, short.as_ptr(), 2), RoipcaStatus::DimensionMismatch);
        assert!(last_error().contains("dimension"));
        let bad = [1.0, f64::NAN, 0.0, 0.0, 0.0];
        assert_eq!(roipca_model_ingest(model, bad.as_ptr(), 5), RoipcaStatus::InvalidArgument);

        let mut values = [0.0; 1];
        let s = roipca_model_components(model, values.as_mut_ptr(), 1, ptr::null_mut(), 0);
        assert_eq!(s, RoipcaStatus::BufferTooSmall);

        assert_eq!(roipca_model_ingest(model, ptr::null(), 5), RoipcaStatus::NullPointer);
        assert_eq!(roipca_model_ingest(ptr::null_mut(), bad.as_ptr(), 5), RoipcaStatus::NullPointer);
        assert_eq!(roipca_model_dim(ptr::null()), 0);
        roipca_model_free(model);
        roipca_model_free(ptr::null_mut());
    }
}

#[test]
fn last_error_sizes_and_truncates() {
    let (status, _) = new_model(2, 5, 3, None);
    assert_eq!(status, RoipcaStatus::InsufficientData);
    let full = unsafe { roipca_last_error(ptr::null_mut(), 0) };
    assert!(full > 4);
    let mut buf = [0x7f as std::ffi::c_char; 4];
    let n = unsafe { roipca_last_error(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, full);
    assert_eq!(buf[3], 0);
}

#[test]
fn status_messages_are_static_strings() {
    for s in [RoipcaStatus::Ok, RoipcaStatus::NullPointer, RoipcaStatus::Panic] {
        let msg = unsafe { CStr::from_ptr(roipca_status_message(s)) };
        assert!(!msg.to_bytes().is_empty());
    }
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/roipca.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    let src = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.trim().strip_prefix("pub ").filter(|l| l.contains("extern \"C\" fn ")))
        .filter_map(|l| l.split("fn ").nth(1)?.split('(').next())
        .collect();
    assert!(exports.len() >= 10);
    for name in exports {
        assert!(text.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(text.contains("typedef struct RoipcaModel RoipcaModel;"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("use.c");
    std::fs::write(
        &c,
        "#include \"roipca.h\"\nint main(void) {\n  RoipcaOptions o = roipca_options_default();\n  RoipcaModel *m = 0;\n  \
         double x[4] = {1, 2, 3, 4};\n  RoipcaStatus s = roipca_model_new(x, 2, 2, 1, &o, &m);\n  \
         roipca_model_free(m);\n  return s == ROIPCA_STATUS_OK ? 0 : 1;\n}\n",
    )
    .unwrap();
    let include = header().parent().unwrap().to_path_buf();
    for (compiler, extra) in [("cc", vec!["-std=c99"]), ("c++", vec!["-x", "c++", "-std=c++11"])] {
        let status = Command::new(compiler)
            .args(&extra)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
            .arg(&include)
            .arg(&c)
            .status();
        match status {
            Ok(s) => assert!(s.success(), "{compiler} rejected the header"),
            Err(e) => panic!("{compiler} unavailable: {e}"),
        }
    }
}
