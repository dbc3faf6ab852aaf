use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use dktlab::data::save_model;
use dktlab::encoding::{EncodingScheme, Interaction};
use dktlab::models::{train, KnowledgeTracer, TrainConfig};
use dktlab::numerics::Rng;
use dktlab::simulator::{generate_dataset, SyntheticWorld, WorldConfig};
use dktlab_ffi::*;

fn trained(dir: &Path) -> (KnowledgeTracer, CString) {
    let mut rng = Rng::new(4);
    let world = SyntheticWorld::generate(&WorldConfig::new(2), &mut rng).unwrap();
    let data = generate_dataset(&world, 30, &mut rng).unwrap();
    let cfg = TrainConfig {
        hidden_dim: 6,
        epochs: 1,
        ..TrainConfig::default()
    };
    let tracer = train(&data.sequences, &EncodingScheme::one_hot(50), &cfg).unwrap().tracer;
    let path = dir.join("m.model");
    save_model(&path, &tracer, &world.tag_names()).unwrap();
    (tracer, CString::new(path.to_str().unwrap()).unwrap())
}

fn last_error() -> String {
    let p = dkt_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn session_predictions_match_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let (tracer, path) = trained(tmp.path());
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(dkt_model_load(path.as_ptr(), &mut model), DktStatus::Ok);
        assert!(dkt_last_error_message().is_null());
        let mut m = 0;
        assert_eq!(dkt_model_exercise_count(model, &mut m), DktStatus::Ok);
        assert_eq!(m, 50);
        let mut h = 0;
        assert_eq!(dkt_model_hidden_dim(model, &mut h), DktStatus::Ok);
        assert_eq!(h, 6);

        let tag = CString::new("ex007").unwrap();
        let mut q = 0;
        assert_eq!(dkt_model_tag_index(model, tag.as_ptr(), &mut q), DktStatus::Ok);
        assert_eq!(q, 7);

        let mut session = ptr::null_mut();
        assert_eq!(dkt_session_new(model, &mut session), DktStatus::Ok);
        // The session keeps the model alive.
        dkt_model_free(model);
        let history = [Interaction::new(7, true), Interaction::new(3, false)];
        for it in &history {
            assert_eq!(dkt_session_observe(session, it.exercise, i32::from(it.correct)), DktStatus::Ok);
        }
        let mut len = 0;
        assert_eq!(dkt_session_length(session, &mut len), DktStatus::Ok);
        assert_eq!(len, 2);
        let mut y = vec![0.0; 50];
        assert_eq!(dkt_session_predict(session, y.as_mut_ptr(), y.len()), DktStatus::Ok);
        let expected = tracer.predict_series(&history).unwrap();
        assert_eq!(y.as_slice(), expected.last().unwrap());
        dkt_session_free(session);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, path) = trained(tmp.path());
    unsafe {
        let mut model = ptr::null_mut();
        let missing = CString::new(tmp.path().join("nope.model").to_str().unwrap()).unwrap();
        assert_eq!(dkt_model_load(missing.as_ptr(), &mut model), DktStatus::Io);
        assert!(model.is_null());
        assert!(!last_error().is_empty());

        let garbage = tmp.path().join("bad.model");
        std::fs::write(&garbage, "not a model\n").unwrap();
        let garbage = CString::new(garbage.to_str().unwrap()).unwrap();
        assert_eq!(dkt_model_load(garbage.as_ptr(), &mut model), DktStatus::Parse);

        assert_eq!(dkt_model_load(ptr::null(), &mut model), DktStatus::NullPointer);
        assert_eq!(dkt_model_load(path.as_ptr(), &mut model), DktStatus::Ok);

        let tag = CString::new("missing").unwrap();
        let mut q = 0;
        assert_eq!(dkt_model_tag_index(model, tag.as_ptr(), &mut q), DktStatus::UnknownTag);
        assert!(last_error().contains("missing"));

        let mut session = ptr::null_mut();
        assert_eq!(dkt_session_new(model, &mut session), DktStatus::Ok);
        assert_eq!(dkt_session_observe(session, 50, 1), DktStatus::OutOfRange);
        let mut small = [0.0; 10];
        assert_eq!(dkt_session_predict(session, small.as_mut_ptr(), small.len()), DktStatus::BufferTooSmall);
        assert_eq!(dkt_session_observe(ptr::null_mut(), 0, 1), DktStatus::NullPointer);
        dkt_session_free(session);
        dkt_model_free(model);
        dkt_model_free(ptr::null_mut());
        dkt_session_free(ptr::null_mut());
    }
}

#[test]
fn auc_through_the_c_interface() {
    let labels = [1u8, 0, 1, 0];
    let scores = [0.9, 0.1, 0.4, 0.4];
    let mut out = 0.0;
    unsafe {
        assert_eq!(dkt_auc(labels.as_ptr(), scores.as_ptr(), 4, &mut out), DktStatus::Ok);
        assert_eq!(out, 0.875);
        assert_eq!(dkt_auc(labels.as_ptr(), scores.as_ptr(), 1, &mut out), DktStatus::InvalidArgument);
    }
    let version = unsafe { CStr::from_ptr(dkt_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_declares_the_api() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dktlab.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "dkt_model_load",
        "dkt_model_free",
        "dkt_session_new",
        "dkt_session_observe",
        "dkt_session_predict",
        "dkt_last_error_message",
        "DKT_STATUS_UNKNOWN_TAG",
        "typedef struct DktModel DktModel",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // Compile the header as C when a compiler is around.
    if let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
