use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use scratchpad::config::parse_config;
use scratchpad::pipeline::cmd_train;
use scratchpad_ffi::*;

fn trained_run(dir: &Path) -> PathBuf {
    let text = format!(
        "output_dir = {:?}\n[task]\nkind = \"copy\"\nvocab = 5\nmin_len = 2\nmax_len = 4\ntrain_size = 30\nvalid_size = 5\ntest_size = 5\n\
         [model]\nhidden = 6\nembed_dim = 4\n[training]\nepochs = 1\nbatch_tokens = 30\n",
        dir.join("run").to_str().unwrap()
    );
    let config = parse_config(&text, Path::new("test.toml"), &[]).unwrap();
    cmd_train(&config).unwrap();
    config.output_dir
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(sp_last_error()) }.to_str().unwrap().to_string()
}

#[test]
fn open_decode_free() {
    let tmp = tempfile::tempdir().unwrap();
    let run = trained_run(tmp.path());
    let dir = CString::new(run.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { sp_model_open(dir.as_ptr(), &mut model) }, SpStatus::Ok);
    assert!(!model.is_null());
    assert!(unsafe { sp_model_target_vocab(model) } > 4);

    let src = CString::new("t1 t2 t3").unwrap();
    let mut out = ptr::null_mut();
    let mut entropy = f64::NAN;
    for beam in [1, 3] {
        let s = unsafe { sp_decode(model, src.as_ptr(), beam, 6, &mut out, &mut entropy) };
        assert_eq!(s, SpStatus::Ok, "{}", last_error());
        let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_string();
        assert!(text.split_whitespace().count() <= 6, "{text}");
        assert!(entropy >= 0.0 && entropy <= (3f64).ln() + 1e-12);
        unsafe { sp_string_free(out) };
    }
    // entropy pointer is optional
    assert_eq!(unsafe { sp_decode(model, src.as_ptr(), 1, 0, &mut out, ptr::null_mut()) }, SpStatus::Ok);
    unsafe { sp_string_free(out) };

    let empty = CString::new("   ").unwrap();
    assert_eq!(unsafe { sp_decode(model, empty.as_ptr(), 1, 0, &mut out, ptr::null_mut()) }, SpStatus::InvalidArgument);
    assert!(out.is_null());
    assert!(last_error().contains("no tokens"));
    assert_eq!(unsafe { sp_decode(model, src.as_ptr(), 0, 0, &mut out, ptr::null_mut()) }, SpStatus::InvalidArgument);
    assert!(last_error().contains("decode.beam"));
    unsafe { sp_model_free(model) };
}

#[test]
fn errors_are_reported() {
    let mut model = ptr::null_mut();
    let missing = CString::new("/nonexistent/run").unwrap();
    assert_eq!(unsafe { sp_model_open(missing.as_ptr(), &mut model) }, SpStatus::Io);
    assert!(model.is_null());
    assert!(last_error().contains("config.resolved.toml"));
    assert_eq!(unsafe { sp_model_open(ptr::null(), &mut model) }, SpStatus::NullPointer);
    let bad = [0xffu8, 0];
    assert_eq!(unsafe { sp_model_open(bad.as_ptr().cast(), &mut model) }, SpStatus::InvalidUtf8);
    let mut out = ptr::null_mut();
    let src = CString::new("a").unwrap();
    assert_eq!(unsafe { sp_decode(ptr::null(), src.as_ptr(), 1, 0, &mut out, ptr::null_mut()) }, SpStatus::NullPointer);
    unsafe {
        sp_model_free(ptr::null_mut());
        sp_string_free(ptr::null_mut());
    }
    assert_eq!(unsafe { sp_model_target_vocab(ptr::null()) }, 0);
}

#[test]
fn entropy_through_abi() {
    let p = [0.5, 0.25, 0.25];
    let mut h = 0.0;
    assert_eq!(unsafe { sp_attention_entropy(p.as_ptr(), p.len(), &mut h) }, SpStatus::Ok);
    assert!((h - 1.5 * 2f64.ln()).abs() < 1e-12);
    assert_eq!(last_error(), "");
    let q = [0.5, 0.6];
    assert_eq!(unsafe { sp_attention_entropy(q.as_ptr(), q.len(), &mut h) }, SpStatus::InvalidArgument);
    assert!(last_error().contains("not normalized"));
    assert_eq!(unsafe { sp_attention_entropy(ptr::null(), 0, &mut h) }, SpStatus::NullPointer);
}

#[test]
fn header_declares_the_abi() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/scratchpad.h")).unwrap();
    for name in [
        "typedef struct SpModel SpModel",
        "SP_STATUS_OK = 0",
        "SP_STATUS_PANIC = 8",
        "sp_model_open",
        "sp_model_free",
        "sp_decode",
        "sp_string_free",
        "sp_last_error",
        "sp_attention_entropy",
        "sp_model_target_vocab",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// The header must compile as C when a C compiler is around.
#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"scratchpad.h\"\nint main(void) { SpModel *m = 0; SpStatus s = sp_model_open(\"x\", &m); sp_model_free(m); return s == SP_STATUS_OK; }\n",
    )
    .unwrap();
    let Ok(status) = std::process::Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&header)
        .arg(&src)
        .status()
    else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(status.success());
}
