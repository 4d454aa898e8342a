use proptest::prelude::*;
use talk2bev::grid::GridMeta;
use talk2bev::map::{BevSource, LanguageEnhancedMap, MapObject, Provenance};
use talk2bev::render::{cell_outline, render_payload, ring_area};

proptest! {
    #[test]
    fn outline_area_equals_cell_area(cells in prop::collection::btree_set((0usize..12, 0usize..12), 1..60)) {
        let meta = GridMeta::default();
        let cells: Vec<_> = cells.into_iter().collect();
        let map = LanguageEnhancedMap::new(
            "r",
            meta,
            Provenance::new("m", BevSource::Synthetic),
            vec![MapObject::from_cells(1, cells.clone(), &meta)],
        );
        let payload = render_payload(&map, None);
        let total: f64 = payload.objects[0].polygons.iter().map(|r| ring_area(r)).sum();
        prop_assert!((total.abs() - cells.len() as f64 * meta.cell_area_m2()).abs() < 1e-9);
        for ring in cell_outline(&cells) {
            prop_assert!(ring.len() >= 4);
            // rings are rectilinear: consecutive corners share a row or a column
            for i in 0..ring.len() {
                let (a, b) = (ring[i], ring[(i + 1) % ring.len()]);
                prop_assert!(a.0 == b.0 || a.1 == b.1);
            }
        }
    }
}
