use std::ffi::{c_char, CStr, CString};
use std::ptr;

use eepsel::bundle::write_bundle;
use eepsel::synth::{gen_source, gen_target, geometric_prior, synthetic_meta, BenchConfig};
use eepsel::{score_all, Metric, ScoreConfig, SourcePool};
use eepsel_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        eepsel_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn synthetic_bundle(dir: &std::path::Path, sources: usize) -> eepsel::ScoreTable {
    let cfg = BenchConfig::spread(sources, 6, 400, 1, 2, 0.1, 0.8, 3);
    let set = gen_target(6, 400, &geometric_prior(6, 0.8), 11).unwrap();
    let preds: Vec<_> = cfg
        .sources
        .iter()
        .map(|s| gen_source(s, &set).unwrap())
        .collect();
    let metas: Vec<_> = cfg.sources.iter().map(synthetic_meta).collect();
    write_bundle(&set, &preds, &metas, dir).unwrap();
    let pool = SourcePool::from_metas(&metas, None).unwrap();
    score_all(&set, &preds, &metas, &pool, 2, &ScoreConfig::default()).unwrap()
}

#[test]
fn load_score_and_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let expected = synthetic_bundle(dir.path(), 5);
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe {
        let mut bundle = ptr::null_mut();
        assert_eq!(
            eepsel_bundle_load(path.as_ptr(), &mut bundle),
            EepselStatus::Ok
        );
        let mut n = 0usize;
        assert_eq!(eepsel_bundle_num_samples(bundle, &mut n), EepselStatus::Ok);
        assert_eq!(n, 400);
        assert_eq!(eepsel_bundle_num_sources(bundle, &mut n), EepselStatus::Ok);
        assert_eq!(n, 5);
        assert_eq!(eepsel_bundle_num_classes(bundle, &mut n), EepselStatus::Ok);
        assert_eq!(n, 6);

        let mut table = ptr::null_mut();
        assert_eq!(
            eepsel_score(bundle, 2, 2, 1 << 30, &mut table),
            EepselStatus::Ok
        );
        assert_eq!(eepsel_table_num_rows(table, &mut n), EepselStatus::Ok);
        assert_eq!(n, 10);

        for (r, row) in expected.rows.iter().enumerate() {
            let mut needed = 0usize;
            assert_eq!(
                eepsel_table_ensemble_key(table, r, ptr::null_mut(), 0, &mut needed),
                EepselStatus::BufferTooSmall
            );
            let mut buf = vec![0 as c_char; needed + 1];
            assert_eq!(
                eepsel_table_ensemble_key(table, r, buf.as_mut_ptr(), buf.len(), &mut needed),
                EepselStatus::Ok
            );
            assert_eq!(
                CStr::from_ptr(buf.as_ptr()).to_str().unwrap(),
                row.ensemble.key()
            );
            for (code, metric) in Metric::ALL.iter().enumerate() {
                let mut v = 0.0;
                assert_eq!(
                    eepsel_table_value(table, r, code as u32, &mut v),
                    EepselStatus::Ok
                );
                assert_eq!(
                    v.to_bits(),
                    row.scores[expected.metrics.iter().position(|m| m == metric).unwrap()]
                        .to_bits()
                );
            }
        }
        let mut v = 0.0;
        assert_eq!(
            eepsel_table_value(table, 0, 9, &mut v),
            EepselStatus::Validation
        );
        assert_eq!(
            eepsel_table_value(table, 99, 0, &mut v),
            EepselStatus::Validation
        );
        assert!(last_error().contains("out of range"));

        let csv = dir.path().join("scores.csv");
        let csv_c = CString::new(csv.to_str().unwrap()).unwrap();
        assert_eq!(
            eepsel_table_write_csv(table, csv_c.as_ptr(), 0),
            EepselStatus::Ok
        );
        assert_eq!(std::fs::read_to_string(&csv).unwrap(), expected.to_csv());
        assert_eq!(
            eepsel_table_write_csv(table, csv_c.as_ptr(), 0),
            EepselStatus::Io
        );
        assert_eq!(
            eepsel_table_write_csv(table, csv_c.as_ptr(), 1),
            EepselStatus::Ok
        );

        eepsel_table_free(table);
        eepsel_bundle_free(bundle);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut bundle = ptr::null_mut();
        let missing = CString::new("/nonexistent/bundle").unwrap();
        assert_eq!(
            eepsel_bundle_load(missing.as_ptr(), &mut bundle),
            EepselStatus::Io
        );
        assert!(bundle.is_null());
        assert!(last_error().contains("manifest.json"));

        assert_eq!(
            eepsel_bundle_load(ptr::null(), &mut bundle),
            EepselStatus::NullPointer
        );
        assert_eq!(
            eepsel_bundle_load(missing.as_ptr(), ptr::null_mut()),
            EepselStatus::NullPointer
        );
        let mut n = 0usize;
        assert_eq!(
            eepsel_bundle_num_samples(ptr::null(), &mut n),
            EepselStatus::NullPointer
        );

        let dir = tempfile::tempdir().unwrap();
        synthetic_bundle(dir.path(), 3);
        let path = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(
            eepsel_bundle_load(path.as_ptr(), &mut bundle),
            EepselStatus::Ok
        );
        assert!(last_error().is_empty());
        let mut table = ptr::null_mut();
        assert_eq!(
            eepsel_score(bundle, 4, 1, 1 << 30, &mut table),
            EepselStatus::Validation
        );
        assert!(table.is_null());
        assert_eq!(
            eepsel_score(bundle, 2, 1, 16, &mut table),
            EepselStatus::Validation
        );
        assert!(last_error().contains("memory budget"));
        eepsel_bundle_free(bundle);
        eepsel_bundle_free(ptr::null_mut());
        eepsel_table_free(ptr::null_mut());
    }
}

#[test]
fn last_error_truncates() {
    unsafe {
        let missing = CString::new("/nonexistent").unwrap();
        let mut bundle = ptr::null_mut();
        eepsel_bundle_load(missing.as_ptr(), &mut bundle);
        let mut small = [0x7f as c_char; 8];
        let full = eepsel_last_error(small.as_mut_ptr(), small.len());
        assert!(full > 7);
        assert_eq!(small[7], 0);
        assert_eq!(CStr::from_ptr(small.as_ptr()).to_bytes().len(), 7);
        assert_eq!(eepsel_last_error(ptr::null_mut(), 0), full);
    }
}

#[test]
fn correlations() {
    let x = [1.0, 2.0, 3.0, 4.0];
    let y = [2.0, 4.0, 6.0, 9.0];
    let rev = [4.0, 3.0, 2.0, 1.0];
    let mut out = 0.0;
    unsafe {
        assert_eq!(
            eepsel_pearson(x.as_ptr(), y.as_ptr(), 4, &mut out),
            EepselStatus::Ok
        );
        assert_eq!(out, eepsel::pearson(&x, &y).unwrap());
        assert_eq!(
            eepsel_kendall_tau(x.as_ptr(), rev.as_ptr(), 4, &mut out),
            EepselStatus::Ok
        );
        assert_eq!(out, -1.0);
        assert_eq!(
            eepsel_weighted_kendall_tau(x.as_ptr(), y.as_ptr(), 4, &mut out),
            EepselStatus::Ok
        );
        assert_eq!(out, 1.0);
        let flat = [1.0; 4];
        assert_eq!(
            eepsel_pearson(flat.as_ptr(), y.as_ptr(), 4, &mut out),
            EepselStatus::Validation
        );
        assert!(last_error().contains("zero variance"));
        assert_eq!(
            eepsel_kendall_tau(ptr::null(), y.as_ptr(), 4, &mut out),
            EepselStatus::NullPointer
        );
    }
    assert_eq!(eepsel_num_combinations(64, 3), 41664);
    assert_eq!(eepsel_num_combinations(15, 3), 455);
    let v = unsafe { CStr::from_ptr(eepsel_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
