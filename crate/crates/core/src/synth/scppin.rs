//! The scppin scenario: a client whose dependency `igraph` vendors a Red
//! Hat build of libxml2, and whose other dependency `pycairo` links the
//! host's libcairo. The libxml2 flaw is reachable from scppin, the cairo
//! one only through `igraph.plot`, which scppin never calls.

use std::io;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::{build_elf, ElfSpec, WheelSpec};
use crate::elfscan::MapResolver;
use crate::pkgmeta::MemRepository;
use crate::provdb::{HashDb, HashDbEntry};
use crate::upstream::HostInventory;
use crate::versioncmp::OsFamily;
use crate::vulnreach::{OsFix, VulnDb, VulnRecord};
use crate::xecg::{parse_bridge_map, parse_unit_graph, BridgeMap, UnitGraph};

pub const SEARCH_PATH: &str = "/usr/lib/x86_64-linux-gnu";
pub const IGRAPH_EXT: &str = "igraph:igraph/_igraph.abi3.so";
pub const VENDORED_XML: &str = "igraph:igraph.libs/libxml2-3998bec4.so.2.9.1";
pub const PYCAIRO_EXT: &str = "pycairo:cairo/_cairo.cpython-311-x86_64-linux-gnu.so";
pub const SYSTEM_CAIRO: &str = "/usr/lib/x86_64-linux-gnu/libcairo.so.2";
pub const XML_CVE: &str = "CVE-2025-6021";
pub const CAIRO_CVE: &str = "CVE-2025-50422";

#[derive(Debug, Clone)]
pub struct Scppin {
    pub root: WheelSpec,
    pub deps: Vec<WheelSpec>,
    /// Host libraries by logical path.
    pub system: Vec<(String, Vec<u8>)>,
    pub hash_db: HashDb,
    pub inventory: HostInventory,
    pub graphs: Vec<Value>,
    pub bridges: Value,
    pub vulns: Vec<VulnRecord>,
}

/// Paths of a bundle written by [`Scppin::write_to`].
#[derive(Debug, Clone)]
pub struct ScppinPaths {
    pub wheel: PathBuf,
    pub repo: PathBuf,
    pub sysroot: PathBuf,
    pub hash_db: PathBuf,
    pub inventory: PathBuf,
    pub vuln_db: PathBuf,
    pub callgraphs: PathBuf,
    pub bridges: PathBuf,
    pub config: PathBuf,
}

fn graph(
    unit: &str,
    kind: &str,
    nodes: &[&str],
    imports: &[&str],
    edges: &[(&str, &str)],
) -> Value {
    json!({
        "unit": unit,
        "kind": kind,
        "nodes": nodes,
        "imports": imports,
        "edges": edges.iter().map(|(a, b)| json!([a, b])).collect::<Vec<_>>(),
    })
}

impl Default for Scppin {
    fn default() -> Self {
        Self::new()
    }
}

impl Scppin {
    pub fn new() -> Self {
        let igraph_ext = build_elf(
            &ElfSpec::shared("_igraph.abi3.so")
                .needs(&[
                    "libxml2-3998bec4.so.2.9.1",
                    "libglpk-8f4d2c1b.so.40.3.1",
                    "libgmp-afec2dd4.so.10.2.0",
                ])
                .exports(&[
                    "PyInit__igraph",
                    "igraphmodule_Graph_Read_Ncol",
                    "igraphmodule_Graph_Read_GraphML",
                    "igraphmodule_Graph_community_optimal_modularity",
                ])
                .imports(&[
                    "xmlParseChunk",
                    "xmlCreatePushParserCtxt",
                    "glp_intopt",
                    "__gmpz_init",
                ]),
        );
        let xml = build_elf(
            &ElfSpec::shared("libxml2.so.2")
                .needs(&["libz.so.1", "libm.so.6"])
                .exports(&[
                    "xmlCreatePushParserCtxt",
                    "xmlParseChunk",
                    "xmlSAX2StartElementNs",
                    "xmlBuildQName",
                ])
                .rodata(b"\x0020901\0"),
        );
        let glpk = build_elf(
            &ElfSpec::shared("libglpk.so.40")
                .needs(&["libgmp-afec2dd4.so.10.2.0"])
                .exports(&["glp_intopt"]),
        );
        let gmp = build_elf(&ElfSpec::shared("libgmp.so.10").exports(&["__gmpz_init"]));
        let cairo_ext = build_elf(
            &ElfSpec::shared("_cairo.cpython-311-x86_64-linux-gnu.so")
                .needs(&["libcairo.so.2"])
                .exports(&[
                    "PyInit__cairo",
                    "pycairo_show_text",
                    "pycairo_image_surface_new",
                ])
                .imports(&["cairo_show_text", "cairo_image_surface_create"]),
        );
        let cairo = build_elf(
            &ElfSpec::shared("libcairo.so.2")
                .needs(&["libz.so.1"])
                .exports(&["cairo_show_text", "cairo_image_surface_create"]),
        );
        let libz = build_elf(&ElfSpec::shared("libz.so.1").exports(&["inflate", "zlibVersion"]));
        let libm = build_elf(&ElfSpec::shared("libm.so.6").exports(&["floor", "sqrt"]));

        let root = WheelSpec::new("scppin", "0.3.1")
            .requires(&["igraph>=0.11.0", "pandas>=1.3.0"])
            .file(
                "scppin/__init__.py",
                b"from .scppin import scPPIN\n".to_vec(),
            );
        let deps = vec![
            WheelSpec::new("igraph", "0.11.9")
                .requires(&["pycairo"])
                .file(
                    "igraph/__init__.py",
                    b"from igraph._igraph import *\n".to_vec(),
                )
                .file("igraph/_igraph.abi3.so", igraph_ext)
                .file("igraph.libs/libxml2-3998bec4.so.2.9.1", xml)
                .file("igraph.libs/libglpk-8f4d2c1b.so.40.3.1", glpk)
                .file("igraph.libs/libgmp-afec2dd4.so.10.2.0", gmp),
            WheelSpec::new("igraph", "0.10.8").file("igraph/__init__.py", Vec::new()),
            WheelSpec::new("pandas", "2.2.3").file("pandas/__init__.py", Vec::new()),
            WheelSpec::new("pycairo", "1.28.0")
                .file("cairo/__init__.py", b"from ._cairo import *\n".to_vec())
                .file("cairo/_cairo.cpython-311-x86_64-linux-gnu.so", cairo_ext),
        ];
        let system = vec![
            (SYSTEM_CAIRO.to_string(), cairo),
            ("/usr/lib/x86_64-linux-gnu/libz.so.1".to_string(), libz),
            ("/usr/lib/x86_64-linux-gnu/libm.so.6".to_string(), libm),
        ];

        let entry =
            |os: &str, package: &str, version: &str, libname: &str, hash8: &str| HashDbEntry {
                os: os.into(),
                package: package.into(),
                version: version.into(),
                libname: libname.into(),
                hash8: hash8.into(),
            };
        let hash_db = HashDb::from_entries([
            entry(
                "redhat/centos",
                "libxml2",
                "2.9.1-6.el7_9.6",
                "libxml2.so",
                "3998bec4",
            ),
            entry(
                "redhat/centos",
                "libxml2",
                "2.9.1-6.el7_9.5",
                "libxml2.so",
                "51be8f5c",
            ),
            entry(
                "redhat/centos",
                "gmp",
                "1:6.0.0-15.el7",
                "libgmp.so",
                "afec2dd4",
            ),
            entry(
                "debian/debian",
                "libxml2",
                "2.9.4+dfsg1-7+deb10u4",
                "libxml2.so",
                "0c5e1e3a",
            ),
        ]);

        let mut inventory = HostInventory::new();
        inventory.insert(SYSTEM_CAIRO, "debian/debian", "libcairo2", "1.18.4-1");
        inventory.insert(
            "/usr/lib/x86_64-linux-gnu/libz.so.1",
            "debian/debian",
            "zlib1g",
            "1:1.3.dfsg+really1.3.1-1+b1",
        );
        inventory.insert(
            "/usr/lib/x86_64-linux-gnu/libm.so.6",
            "debian/debian",
            "libc6",
            "2.41-12",
        );

        let graphs = vec![
            graph(
                "scppin",
                "python",
                &[
                    "scPPIN.__init__",
                    "scPPIN.load_network",
                    "scPPIN.set_node_weights",
                    "scPPIN.detect_module",
                ],
                &[
                    "igraph.Graph.Read_Ncol",
                    "igraph.Graph.Read_GraphML",
                    "pandas.read_csv",
                ],
                &[
                    ("scPPIN.__init__", "scPPIN.load_network"),
                    ("scPPIN.load_network", "igraph.Graph.Read_Ncol"),
                    ("scPPIN.load_network", "igraph.Graph.Read_GraphML"),
                    ("scPPIN.set_node_weights", "pandas.read_csv"),
                    ("scPPIN.detect_module", "scPPIN.set_node_weights"),
                ],
            ),
            graph(
                "igraph",
                "python",
                &[
                    "igraph.Graph.Read_Ncol",
                    "igraph.Graph.Read_GraphML",
                    "igraph.GraphBase.Read_Ncol",
                    "igraph.GraphBase.Read_GraphML",
                    "igraph.plot",
                    "igraph.drawing.cairo.plot.CairoPlot.redraw",
                ],
                &["cairo.Context.show_text", "cairo.ImageSurface.__init__"],
                &[
                    ("igraph.Graph.Read_Ncol", "igraph.GraphBase.Read_Ncol"),
                    ("igraph.Graph.Read_GraphML", "igraph.GraphBase.Read_GraphML"),
                    ("igraph.plot", "igraph.drawing.cairo.plot.CairoPlot.redraw"),
                    (
                        "igraph.drawing.cairo.plot.CairoPlot.redraw",
                        "cairo.ImageSurface.__init__",
                    ),
                    (
                        "igraph.drawing.cairo.plot.CairoPlot.redraw",
                        "cairo.Context.show_text",
                    ),
                ],
            ),
            graph("pandas", "python", &["pandas.read_csv"], &[], &[]),
            graph(
                "pycairo",
                "python",
                &["cairo.Context.show_text", "cairo.ImageSurface.__init__"],
                &[],
                &[],
            ),
            graph(
                IGRAPH_EXT,
                "binary",
                &[
                    "PyInit__igraph",
                    "igraphmodule_Graph_Read_Ncol",
                    "igraphmodule_Graph_Read_GraphML",
                    "igraphmodule_Graph_community_optimal_modularity",
                    "igraph_read_graph_ncol",
                    "igraph_read_graph_graphml",
                    "igraph_community_optimal_modularity",
                ],
                &[
                    "xmlCreatePushParserCtxt",
                    "xmlParseChunk",
                    "glp_intopt",
                    "__gmpz_init",
                ],
                &[
                    ("igraphmodule_Graph_Read_Ncol", "igraph_read_graph_ncol"),
                    (
                        "igraphmodule_Graph_Read_GraphML",
                        "igraph_read_graph_graphml",
                    ),
                    ("igraph_read_graph_graphml", "xmlCreatePushParserCtxt"),
                    ("igraph_read_graph_graphml", "xmlParseChunk"),
                    (
                        "igraphmodule_Graph_community_optimal_modularity",
                        "igraph_community_optimal_modularity",
                    ),
                    ("igraph_community_optimal_modularity", "glp_intopt"),
                    ("igraph_community_optimal_modularity", "__gmpz_init"),
                ],
            ),
            graph(
                VENDORED_XML,
                "binary",
                &[
                    "xmlCreatePushParserCtxt",
                    "xmlParseChunk",
                    "xmlParseTryOrFinish",
                    "xmlParseStartTag2",
                    "xmlSAX2StartElementNs",
                    "xmlBuildQName",
                ],
                &[],
                &[
                    ("xmlParseChunk", "xmlParseTryOrFinish"),
                    ("xmlParseTryOrFinish", "xmlParseStartTag2"),
                    ("xmlParseStartTag2", "xmlBuildQName"),
                    ("xmlParseStartTag2", "xmlSAX2StartElementNs"),
                    ("xmlSAX2StartElementNs", "xmlBuildQName"),
                ],
            ),
            graph(
                PYCAIRO_EXT,
                "binary",
                &[
                    "PyInit__cairo",
                    "pycairo_show_text",
                    "pycairo_image_surface_new",
                ],
                &["cairo_show_text", "cairo_image_surface_create"],
                &[
                    ("pycairo_show_text", "cairo_show_text"),
                    ("pycairo_image_surface_new", "cairo_image_surface_create"),
                ],
            ),
            graph(
                SYSTEM_CAIRO,
                "binary",
                &[
                    "cairo_show_text",
                    "cairo_image_surface_create",
                    "_cairo_ft_scaled_font_create",
                    "_cairo_ft_unscaled_font_fini",
                ],
                &[],
                &[
                    ("cairo_show_text", "_cairo_ft_scaled_font_create"),
                    (
                        "_cairo_ft_scaled_font_create",
                        "_cairo_ft_unscaled_font_fini",
                    ),
                ],
            ),
        ];

        let bridges = json!({
            "entries": [
                ["igraph", "igraph.GraphBase.Read_Ncol", IGRAPH_EXT, "igraphmodule_Graph_Read_Ncol"],
                ["igraph", "igraph.GraphBase.Read_GraphML", IGRAPH_EXT, "igraphmodule_Graph_Read_GraphML"],
                ["pycairo", "cairo.Context.show_text", PYCAIRO_EXT, "pycairo_show_text"],
                ["pycairo", "cairo.ImageSurface.__init__", PYCAIRO_EXT, "pycairo_image_surface_new"],
            ]
        });

        let vulns = vec![
            VulnRecord {
                cve: XML_CVE.into(),
                project: "gnome.org/libxml2".into(),
                symbols: vec!["xmlBuildQName".into()],
                upstream_ranges: vec!["<2.14.4".into()],
                os_fixes: vec![OsFix {
                    family: OsFamily::Debian,
                    distro: "*".into(),
                    package: "libxml2".into(),
                    fixed: Some("2.9.14+dfsg-1.3~deb12u2".into()),
                    not_affected: false,
                }],
            },
            VulnRecord {
                cve: CAIRO_CVE.into(),
                project: "cairographics.org".into(),
                symbols: vec!["_cairo_ft_unscaled_font_fini".into()],
                upstream_ranges: vec!["<=1.18.4".into()],
                os_fixes: Vec::new(),
            },
        ];

        Scppin {
            root,
            deps,
            system,
            hash_db,
            inventory,
            graphs,
            bridges,
            vulns,
        }
    }

    pub fn root_wheel(&self) -> Vec<u8> {
        self.root.build()
    }

    pub fn repository(&self) -> MemRepository {
        let mut repo = MemRepository::new();
        for w in std::iter::once(&self.root).chain(&self.deps) {
            repo.insert(&w.name, &w.version, w.build());
        }
        repo
    }

    pub fn resolver(&self) -> MapResolver {
        let mut r = MapResolver::default();
        for (path, bytes) in &self.system {
            let soname = Path::new(path)
                .file_name()
                .unwrap()
                .to_string_lossy()
                .into_owned();
            r.insert(&soname, path, Some(bytes.clone()));
        }
        r
    }

    pub fn unit_graphs(&self) -> Vec<UnitGraph> {
        self.graphs
            .iter()
            .map(|g| parse_unit_graph(g).expect("fixture graphs are valid"))
            .collect()
    }

    pub fn bridge_map(&self) -> BridgeMap {
        parse_bridge_map(&self.bridges).expect("fixture bridges are valid")
    }

    pub fn vuln_db(&self) -> VulnDb {
        VulnDb::new(self.vulns.clone()).expect("fixture records are valid")
    }

    /// Lay the bundle out under `dir`, with a `scan.conf` naming every
    /// input.
    pub fn write_to(&self, dir: &Path) -> io::Result<ScppinPaths> {
        let p = ScppinPaths {
            wheel: dir.join(self.root.filename()),
            repo: dir.join("wheels"),
            sysroot: dir.join("sysroot"),
            hash_db: dir.join("hashdb.tsv"),
            inventory: dir.join("inventory.tsv"),
            vuln_db: dir.join("vulndb"),
            callgraphs: dir.join("callgraphs"),
            bridges: dir.join("bridges.json"),
            config: dir.join("scan.conf"),
        };
        std::fs::create_dir_all(&p.repo)?;
        std::fs::create_dir_all(&p.vuln_db)?;
        std::fs::create_dir_all(&p.callgraphs)?;
        std::fs::write(&p.wheel, self.root_wheel())?;
        for w in &self.deps {
            std::fs::write(p.repo.join(w.filename()), w.build())?;
        }
        for (path, bytes) in &self.system {
            let on_disk = p.sysroot.join(path.trim_start_matches('/'));
            std::fs::create_dir_all(on_disk.parent().unwrap())?;
            std::fs::write(on_disk, bytes)?;
        }
        self.hash_db.save(&p.hash_db)?;
        std::fs::write(&p.inventory, self.inventory.to_text())?;
        for r in &self.vulns {
            let text = serde_json::to_string_pretty(r).map_err(io::Error::other)?;
            std::fs::write(p.vuln_db.join(format!("{}.json", r.cve)), text + "\n")?;
        }
        for (i, g) in self.graphs.iter().enumerate() {
            let unit = g["unit"].as_str().unwrap_or_default();
            let safe: String = unit
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                        c
                    } else {
                        '_'
                    }
                })
                .collect();
            let text = serde_json::to_string_pretty(g).map_err(io::Error::other)?;
            std::fs::write(
                p.callgraphs
                    .join(format!("{i:02}-{}.json", safe.trim_matches('_'))),
                text + "\n",
            )?;
        }
        let text = serde_json::to_string_pretty(&self.bridges).map_err(io::Error::other)?;
        std::fs::write(&p.bridges, text + "\n")?;
        let conf = format!(
            "# scppin scenario\nwheel = {}\nrepo = {}\nhash-db = {}\nvuln-db = {}\ncallgraphs = {}\nbridges = {}\ninventory = {}\nsysroot = {}\nsearch-path = {SEARCH_PATH}\n",
            p.wheel.display(),
            p.repo.display(),
            p.hash_db.display(),
            p.vuln_db.display(),
            p.callgraphs.display(),
            p.bridges.display(),
            p.inventory.display(),
            p.sysroot.display(),
        );
        std::fs::write(&p.config, conf)?;
        Ok(p)
    }
}
