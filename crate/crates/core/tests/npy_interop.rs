//! Byte-level agreement with numpy's own `.npy`/`.npz` writer and reader.

use std::fs;
use std::path::Path;
use std::process::Command;

use geeval_core::npy::{read_npy, read_npz, write_npy, write_npz, NpyArray, NpzArchive};

fn python(script: &str, dir: &Path) {
    let out = Command::new("python3").arg("-c").arg(script).arg(dir).output().expect("python3 runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn cases() -> Vec<(&'static str, NpyArray)> {
    vec![
        ("scalar", NpyArray::from_f64(vec![], vec![2.5])),
        ("empty", NpyArray::from_f64(vec![0], vec![])),
        ("vec", NpyArray::from_f64(vec![3], vec![1.0, -0.5, f64::NAN])),
        ("mat", NpyArray::from_f64(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])),
        ("cube", NpyArray::from_f64(vec![2, 1, 2], vec![0.1, 0.2, 0.3, 0.4])),
        ("ints", NpyArray::from_i64(vec![4], vec![-2, 0, 7, i64::MAX])),
        ("text", NpyArray::from_strings(vec!["B4".into(), "nir".into()])),
    ]
}

const NUMPY_WRITER: &str = r#"
import sys, numpy as np
d = sys.argv[1]
np.save(d + "/scalar.npy", np.float64(2.5))
np.save(d + "/empty.npy", np.zeros((0,), dtype="<f8"))
np.save(d + "/vec.npy", np.array([1.0, -0.5, np.nan]))
np.save(d + "/mat.npy", np.arange(1, 7, dtype="<f8").reshape(2, 3))
np.save(d + "/cube.npy", np.array([0.1, 0.2, 0.3, 0.4]).reshape(2, 1, 2))
np.save(d + "/ints.npy", np.array([-2, 0, 7, 2**63 - 1], dtype="<i8"))
np.save(d + "/text.npy", np.array(["B4", "nir"]))
"#;

#[test]
fn npy_bytes_match_numpy() {
    let tmp = tempfile::tempdir().unwrap();
    python(NUMPY_WRITER, tmp.path());
    for (name, a) in cases() {
        let mut ours = Vec::new();
        write_npy(&mut ours, &a).unwrap();
        let theirs = fs::read(tmp.path().join(format!("{name}.npy"))).unwrap();
        assert_eq!(ours, theirs, "{name}");
        let back = read_npy(&theirs[..]).unwrap();
        assert_eq!(back.shape, a.shape, "{name}");
        assert_eq!(back.descr, a.descr, "{name}");
    }
}

#[test]
fn numpy_reads_our_npz() {
    let tmp = tempfile::tempdir().unwrap();
    let mut ar = NpzArchive::default();
    ar.push("band_B4", NpyArray::from_f64(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
    ar.push("__meta__", NpyArray::from_strings(vec!["B4".into()]));
    write_npz(&tmp.path().join("x.npz"), &ar).unwrap();
    python(
        r#"
import sys, numpy as np
z = np.load(sys.argv[1] + "/x.npz")
assert sorted(z.files) == ["__meta__", "band_B4"], z.files
assert z["band_B4"].tolist() == [[1.0, 2.0], [3.0, 4.0]]
assert z["__meta__"].tolist() == ["B4"]
"#,
        tmp.path(),
    );
}

#[test]
fn we_read_numpy_npz_stored_and_compressed() {
    let tmp = tempfile::tempdir().unwrap();
    python(
        r#"
import sys, numpy as np
d = sys.argv[1]
a = np.arange(12, dtype="<f4").reshape(3, 4)
np.savez(d + "/plain.npz", arr_0=a, flag=np.array([True, False]))
np.savez_compressed(d + "/packed.npz", arr_0=np.asfortranarray(a.astype("<f8")))
"#,
        tmp.path(),
    );
    let want: Vec<f64> = (0..12).map(f64::from).collect();
    for f in ["plain.npz", "packed.npz"] {
        let ar = read_npz(&tmp.path().join(f)).unwrap();
        let a = ar.get("arr_0").unwrap();
        assert_eq!(a.shape, vec![3, 4], "{f}");
        assert_eq!(a.numeric().unwrap(), &want[..], "{f}");
    }
    let ar = read_npz(&tmp.path().join("plain.npz")).unwrap();
    assert_eq!(ar.get("flag").unwrap().numeric().unwrap(), &[1.0, 0.0]);
}
