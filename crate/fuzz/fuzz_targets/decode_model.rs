#![no_main]

use elmpde::pipeline::ModelFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = ModelFile::decode(data) {
        assert_eq!(file.encode(), data);
        let _ = file.into_model();
    }
});
