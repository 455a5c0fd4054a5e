"""Writes golden agent prompts for the fixture observations.

The template is read from the listing in the source document given as the
first argument; list formatting uses Python's own repr and viewport pages
use decimal half-up rounding.
"""
import json
import os
import sys
from decimal import Decimal, ROUND_HALF_UP

HERE = os.path.dirname(os.path.abspath(__file__))
FIX = os.path.join(HERE, "..", "fixtures")
GOLD = os.path.join(HERE, "..", "golden")

doc = open(sys.argv[1], encoding="utf-8").read()
start = doc.index("\\begin{lstlisting}\n<html> {html_content} </html>") + len("\\begin{lstlisting}\n")
template = doc[start:doc.index("\\end{lstlisting}", start)]


def pages(n, d):
    return str((Decimal(n) / Decimal(d)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


observations = [
    {
        "name": "empty_history",
        "task": "Find the cheapest flight from Beijing to Shanghai",
        "html": "<html><input id=\"0\" type=\"text\" placeholder=\"From\" /><button id=\"1\">Search</button></html>",
        "tabs": [{"title": "Flights", "is_current": True}],
        "scroll_y": 0, "viewport_height": 800, "page_height": 800,
        "previous_commands": [],
    },
    {
        "name": "two_tabs",
        "task": "Open the second result and report its {price}",
        "html": "<html><a id=\"0\" href=\"/r/1\">First</a><a id=\"1\" href=\"/r/2\">Second</a><p>It's 5 o'clock</p></html>",
        "tabs": [{"title": "Results", "is_current": False}, {"title": "Second result", "is_current": True}],
        "scroll_y": 1200, "viewport_height": 800, "page_height": 4000,
        "previous_commands": [
            "type_string(element_id=\"0\", content=\"it's here\", press_enter=True)  # search",
            "click(element_id=\"1\")",
        ],
    },
    {
        "name": "unicode_scrolled",
        "task": "在页面上找到联系方式",
        "html": "<html><p>联系我们</p><button id=\"0\">更多</button></html>",
        "tabs": [{"title": "首页", "is_current": True}],
        "scroll_y": 200, "viewport_height": 800, "page_height": 1000,
        "previous_commands": [
            "scroll_page(direction=\"down\")",
            "jump_to(url=\"https://例子.测试/\", new_tab=False)  # 去首页 # again",
            "user_input(message=\"a \\\\ b\")",
        ],
    },
]

for obs in observations:
    tabs = "[" + ", ".join(("*" if t["is_current"] else "") + f"{i}: {t['title']}" for i, t in enumerate(obs["tabs"])) + "]"
    max_pages = max(Decimal(pages(obs["page_height"], obs["viewport_height"])), Decimal("1.0"))
    fields = {
        "html_content": obs["html"],
        "previous_commands": repr(obs["previous_commands"]),
        "exist_window_tabs_with_pointer_to_current_tab": tabs,
        "current_position": pages(obs["scroll_y"], obs["viewport_height"]),
        "max_size": str(max_pages),
        "task_description": obs["task"],
    }
    out = []
    rest = template
    # single left-to-right pass; substituted text is never rescanned
    while "{" in rest:
        i = rest.index("{")
        out.append(rest[:i])
        j = rest.find("}", i)
        name = rest[i + 1:j] if j != -1 else None
        if name in fields:
            out.append(fields[name])
            rest = rest[j + 1:]
        else:
            out.append("{")
            rest = rest[i + 1:]
    out.append(rest)
    with open(os.path.join(GOLD, f"prompt_{obs['name']}.txt"), "w", encoding="utf-8") as f:
        f.write("".join(out))

with open(os.path.join(FIX, "observations.json"), "w", encoding="utf-8") as f:
    json.dump(observations, f, indent=1, ensure_ascii=False)
    f.write("\n")
print("wrote", len(observations), "golden prompts")
