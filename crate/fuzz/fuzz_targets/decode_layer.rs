#![no_main]

use elmpde::features::RandomFeatureLayer;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(layer) = RandomFeatureLayer::decode(data) {
        assert_eq!(layer.encode(), data);
    }
});
