from __future__ import annotations

import pytest

from saracoder.eaid import (
    ClassEntity,
    MethodEntity,
    build_enhancement,
    build_symbol_table,
    extract_import_statements,
    render_pe,
    resolve_imports,
)

REPO_FILES = {
    "util_c.py": (
        "class Helper:\n"
        "    scale = 2\n"
        "\n"
        "    def apply(self, value):\n"
        "        return value * self.scale\n"
        "\n"
        "def free_func(a, b=1):\n"
        "    return a + b\n"
    ),
    "my/module.py": (
        "class MyClass:\n"
        "    kind = 'demo'\n"
        "\n"
        "    def run(self):\n"
        "        return self.kind\n"
    ),
    "my/__init__.py": "",
    "pkg/__init__.py": "",
    "pkg/main.py": "from . import helper\n",
    "pkg/helper.py": "def assist(x):\n    return x\n\nVALUE = 3\n",
    "collide.py": (
        "def thing():\n"
        "    return 1\n"
        "\n"
        "class thing:\n"
        "    pass\n"
    ),
}


@pytest.fixture(scope="module")
def repo(tmp_path_factory):
    root = tmp_path_factory.mktemp("eaid_repo")
    for rel, content in REPO_FILES.items():
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content, encoding="utf-8")
    return root


@pytest.fixture(scope="module")
def table(repo):
    return build_symbol_table(repo)


class TestSymbolTable:
    def test_function_entity_fields(self, table):
        entity = table.lookup("util_c.py", "free_func")
        assert isinstance(entity, MethodEntity)
        assert entity.param_signature == [("a", False), ("b", True)]
        assert entity.scope == "module"
        assert entity.body_text.startswith("def free_func")
        assert entity.line_range[0] <= entity.line_range[1]

    def test_class_entity_members(self, table):
        entity = table.lookup("util_c.py", "Helper")
        assert isinstance(entity, ClassEntity)
        assert entity.member_variables == ["scale"]
        assert [m.identifier for m in entity.member_methods] == ["apply"]
        assert entity.member_methods[0].scope == "Helper"

    def test_member_ranges_nest_in_class_range(self, table):
        entity = table.lookup("util_c.py", "Helper")
        lo, hi = entity.line_range
        for method in entity.member_methods:
            assert lo <= method.line_range[0] <= method.line_range[1] <= hi

    def test_empty_file_has_no_entries(self, table):
        assert table.files["my/__init__.py"].in_order == []

    def test_collision_keeps_latest_with_warning(self, table):
        entity = table.lookup("collide.py", "thing")
        assert isinstance(entity, ClassEntity)
        assert any("collide.py" in w and "thing" in w for w in table.warnings)

    def test_deterministic(self, repo):
        a = build_symbol_table(repo)
        b = build_symbol_table(repo)
        assert sorted(a.files) == sorted(b.files)
        for file in a.files:
            assert [e.identifier for e in a.files[file].in_order] == [
                e.identifier for e in b.files[file].in_order
            ]


class TestResolveImports:
    def test_dotted_from_import_resolves_entity(self, table):
        result = resolve_imports(["from my.module import MyClass"], "main.py", table)
        assert [r.entity.identifier for r in result.e_lib] == ["MyClass"]
        assert len(result.t_ext) == 0

    def test_external_alias_goes_to_reference_table(self, table):
        result = resolve_imports(["import numpy as np"], "main.py", table)
        assert result.e_lib == []
        assert dict(result.t_ext.items()) == {"numpy": "np"}

    def test_relative_module_import_pulls_module_entities(self, table):
        result = resolve_imports(["from . import helper"], "pkg/main.py", table)
        names = [r.entity.identifier for r in result.e_lib]
        assert names == ["assist"]
        assert len(result.t_ext) == 0

    def test_unaliased_external(self, table):
        result = resolve_imports(["import requests"], "main.py", table)
        assert dict(result.t_ext.items()) == {"requests": "requests"}

    def test_from_external_module(self, table):
        result = resolve_imports(["from os.path import join"], "main.py", table)
        assert dict(result.t_ext.items()) == {"os.path": "os.path"}

    def test_relative_climb_above_root_is_recorded(self, table):
        result = resolve_imports(["from ... import nothing"], "pkg/main.py", table)
        assert result.e_lib == []
        assert len(result.t_ext) == 0
        assert result.warnings

    def test_star_import_capped_by_line_order(self, tmp_path):
        lines = "\n\n".join(f"def f{i:02d}():\n    return {i}" for i in range(30))
        (tmp_path / "wide.py").write_text(lines + "\n", encoding="utf-8")
        table = build_symbol_table(tmp_path)
        result = resolve_imports(["from wide import *"], "main.py", table)
        names = [r.entity.identifier for r in result.e_lib]
        assert names == [f"f{i:02d}" for i in range(20)]

    def test_entities_follow_import_statement_order(self, table):
        result = resolve_imports(
            ["from util_c import free_func", "from my.module import MyClass"],
            "main.py",
            table,
        )
        assert [r.entity.identifier for r in result.e_lib] == ["free_func", "MyClass"]
        assert [r.import_index for r in result.e_lib] == [0, 1]

    def test_unknown_name_in_internal_module_warns(self, table):
        result = resolve_imports(["from util_c import missing_name"], "main.py", table)
        assert result.e_lib == []
        assert len(result.t_ext) == 0
        assert result.warnings

    def test_alias_recorded_on_entity(self, table):
        result = resolve_imports(["from util_c import Helper as H"], "main.py", table)
        assert result.e_lib[0].alias == "H"

    def test_internal_and_external_disjoint(self, table):
        result = resolve_imports(
            ["from util_c import Helper", "import numpy as np"], "main.py", table
        )
        internal_files = {r.source_file for r in result.e_lib}
        assert "util_c.py" in internal_files
        assert set(dict(result.t_ext.items())) == {"numpy"}

    def test_named_imports_never_smuggle_entities(self, table):
        # Entities resolved from named from-imports carry exactly the
        # imported identifiers; nothing else slips into the result.
        stmts = [
            "from util_c import free_func",
            "from my.module import MyClass",
            "import numpy as np",
        ]
        result = resolve_imports(stmts, "main.py", table)
        imported_names = {"free_func", "MyClass"}
        assert {r.entity.identifier for r in result.e_lib} <= imported_names

    def test_resolution_is_deterministic(self, table):
        stmts = ["from util_c import Helper", "import numpy as np", "from . import helper"]
        a = resolve_imports(stmts, "pkg/main.py", table)
        b = resolve_imports(stmts, "pkg/main.py", table)
        assert [r.entity.identifier for r in a.e_lib] == [r.entity.identifier for r in b.e_lib]
        assert dict(a.t_ext.items()) == dict(b.t_ext.items())


class TestRenderPe:
    def test_empty_imports_render_empty(self, table):
        result = resolve_imports([], "main.py", table)
        assert render_pe([], result.e_lib, result.t_ext) == ""

    def test_function_body_rendered_verbatim(self, table):
        stmts = ["from util_c import free_func"]
        result = resolve_imports(stmts, "main.py", table)
        text = render_pe(stmts, result.e_lib, result.t_ext)
        assert "def free_func(a, b=1):\n    return a + b" in text

    def test_class_rendered_with_variable_table_and_methods(self, table):
        stmts = ["from util_c import Helper"]
        result = resolve_imports(stmts, "main.py", table)
        text = render_pe(stmts, result.e_lib, result.t_ext)
        assert "class Helper:" in text
        assert "# variables: scale" in text
        assert "def apply(self, value):" in text

    def test_entity_order_matches_import_order(self, table):
        stmts = ["from my.module import MyClass", "from util_c import free_func"]
        result = resolve_imports(stmts, "main.py", table)
        text = render_pe(stmts, result.e_lib, result.t_ext)
        assert text.index("class MyClass") < text.index("def free_func")

    def test_external_comment_line_format(self, table):
        stmts = ["import numpy as np"]
        result = resolve_imports(stmts, "main.py", table)
        text = render_pe(stmts, result.e_lib, result.t_ext)
        assert "# external: numpy as np" in text

    def test_raw_import_lines_lead_the_section(self, table):
        stmts = ["from util_c import Helper", "import numpy as np"]
        result = resolve_imports(stmts, "main.py", table)
        text = render_pe(stmts, result.e_lib, result.t_ext)
        assert text.startswith("from util_c import Helper\nimport numpy as np")


class TestExtractImports:
    def test_orders_and_texts(self):
        context = "import os\nfrom a.b import c\n\nx = 1\n"
        assert extract_import_statements(context) == ["import os", "from a.b import c"]

    def test_multiline_import(self):
        context = "from pkg import (\n    alpha,\n    beta,\n)\nx = 1\n"
        stmts = extract_import_statements(context)
        assert len(stmts) == 1
        assert "alpha" in stmts[0] and "beta" in stmts[0]

    def test_unparseable_context_falls_back_to_line_scan(self):
        context = "import os\nthis is not python ((("
        assert extract_import_statements(context) == ["import os"]

    def test_no_imports(self):
        assert extract_import_statements("x = 1\ny = x\n") == []


def test_enhancement_blocks_carry_signatures(table):
    stmts = ["from util_c import Helper", "import numpy as np"]
    result = resolve_imports(stmts, "main.py", table)
    enh = build_enhancement(stmts, result)
    assert enh.import_lines == stmts
    assert enh.entity_blocks[0].signature_text == "class Helper:"
    assert enh.external_lines == ["# external: numpy as np"]
    assert enh.render(signature_only=1).count("def apply") == 0
