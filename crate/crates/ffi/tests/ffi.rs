use std::ffi::{CStr, CString};
use std::ptr;

use qrepeater_ffi::*;

fn last_error() -> String {
    let p = qr_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn link_round_trip_through_handles() {
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { qr_link_run(ptr::null(), &mut handle) }, QrStatus::Ok);
    assert!(qr_last_error_message().is_null());
    let mut p = 0.0;
    assert_eq!(unsafe { qr_link_result_acceptance(handle, &mut p) }, QrStatus::Ok);
    assert!((p - 3e-4).abs() < 1e-12);
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { qr_link_result_to_json(handle, &mut json) }, QrStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_string();
    unsafe {
        qr_string_free(json);
        qr_link_result_free(handle);
    }
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(value["mixture"].as_array().unwrap().len(), 5);
}

#[test]
fn null_and_bad_arguments_are_reported() {
    assert_eq!(unsafe { qr_link_run(ptr::null(), ptr::null_mut()) }, QrStatus::NullPointer);
    assert!(last_error().contains("out"));

    let mut handle = ptr::null_mut();
    let bad = CString::new(r#"{"link": {"emission_probability": -1}}"#).unwrap();
    assert_eq!(unsafe { qr_link_run(bad.as_ptr(), &mut handle) }, QrStatus::ConfigError);
    assert!(last_error().contains("link.emission_probability"));
    assert!(handle.is_null());

    let unknown = CString::new(r#"{"lnk": {}}"#).unwrap();
    assert_eq!(unsafe { qr_link_run(unknown.as_ptr(), &mut handle) }, QrStatus::ConfigError);
    assert!(last_error().contains("lnk"));

    let invalid = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { qr_link_run(invalid.as_ptr().cast(), &mut handle) },
        QrStatus::InvalidUtf8
    );

    let mut p = 0.0;
    assert_eq!(unsafe { qr_link_result_acceptance(ptr::null(), &mut p) }, QrStatus::NullPointer);
    unsafe {
        qr_link_result_free(ptr::null_mut());
        qr_string_free(ptr::null_mut());
    }
}

#[test]
fn chain_stats_are_deterministic() {
    let cfg = CString::new(r#"{"link": {"emission_probability": 0.2}}"#).unwrap();
    let mut a = QrChainStats::default();
    let mut b = QrChainStats::default();
    assert_eq!(unsafe { qr_chain_simulate(cfg.as_ptr(), 9, 300, &mut a) }, QrStatus::Ok);
    assert_eq!(unsafe { qr_chain_simulate(cfg.as_ptr(), 9, 300, &mut b) }, QrStatus::Ok);
    assert_eq!(a, b);
    assert_eq!(a.completed, 300);
    assert!((a.fidelity_min - 1.0).abs() < 1e-9);

    let zero = unsafe { qr_chain_simulate(cfg.as_ptr(), 9, 0, &mut a) };
    assert_eq!(zero, QrStatus::ConfigError);
    assert!(last_error().contains("trials"));
}

#[test]
fn verification_passes_and_reports() {
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { qr_verify(1, &mut report) }, QrStatus::Ok);
    let text = unsafe { CStr::from_ptr(report) }.to_str().unwrap().to_string();
    unsafe { qr_string_free(report) };
    assert!(text.contains("swap.mixture_1_36"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(qr_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/qrepeater.h")).unwrap();
    for name in [
        "qr_link_run",
        "qr_link_result_acceptance",
        "qr_link_result_to_json",
        "qr_link_result_free",
        "qr_string_free",
        "qr_chain_simulate",
        "qr_verify",
        "qr_last_error_message",
        "QR_STATUS_CONFIG_ERROR",
        "typedef struct QrLinkResult QrLinkResult",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
