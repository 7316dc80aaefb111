#include <doctest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iclc/error.hpp"
#include "iclc/templates.hpp"
#include "synthetic.hpp"

using namespace iclc;

namespace {

std::string slurp(const std::string& name) {
  std::ifstream in(std::string(ICLC_GOLDEN_DIR) + "/" + name, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

DataRecord golden_record() {
  const auto j = nlohmann::json::parse(slurp("record.json"));
  DataRecord r;
  r.data_id = j["id"];
  r.field_a = j["field_a"];
  r.field_b = j["field_b"];
  r.gold = j["gold"];
  r.task = Task::ANLI;
  return r;
}

InstructionTemplate simple(std::vector<std::string> choices, Task task = Task::ANLI) {
  InstructionTemplate t;
  t.template_id = 1;
  t.name = "pipe";
  t.pattern = "{field_a}|{field_b}";
  t.answer_choices = std::move(choices);
  t.task = task;
  return t;
}

}  // namespace

TEST_CASE("golden renders of the four verbatim templates") {
  const TemplateSet set(bundled_templates());
  const auto record = golden_record();
  const std::pair<const char*, const char*> cases[] = {
      {"Claim True False Inconclusive", "target_claim_true_false_inconclusive.txt"},
      {"Does It Follow That", "target_does_it_follow_that.txt"},
      {"MNLI Crowdsource", "target_mnli_crowdsource.txt"},
      {"Guaranteed Possible Impossible", "target_guaranteed_possible_impossible.txt"},
  };
  for (const auto& [name, file] : cases) {
    CAPTURE(name);
    const auto& t = set.get(Task::ANLI, name);
    CHECK_FALSE(t.reconstruction);
    const auto block = render_target(t, record);
    CHECK(block.text == slurp(file));
    CHECK(block.kind == BlockKind::Target);
    CHECK(block.label_space == t.answer_choices);
  }
}

TEST_CASE("render_target substitutes and appends the cue") {
  DataRecord r;
  r.field_a = "a";
  r.field_b = "b";
  CHECK(render_target(simple({"x", "y", "z"}), r).text == "a|b\n\nANSWER: ");
  // Placeholder text inside a field is not re-expanded.
  r.field_a = "{field_b}";
  CHECK(render_target(simple({"x", "y", "z"}), r).text == "{field_b}|b\n\nANSWER: ");
  r.task = Task::QQP;
  CHECK_THROWS_AS(render_target(simple({"x", "y", "z"}), r), ValidationError);
}

TEST_CASE("render_in_context appends the gold choice") {
  DataRecord r;
  r.field_a = "a";
  r.field_b = "b";
  const auto t = simple({"true", "false", "inconclusive"});
  r.gold = 0;
  CHECK(render_in_context(t, r).text == "a|b\n\nANSWER: true");
  r.gold = 2;
  CHECK(render_in_context(t, r).text == "a|b\n\nANSWER: inconclusive");
  CHECK(render_in_context(t, r).kind == BlockKind::InContext);
  r.gold = 3;
  CHECK_THROWS_AS(render_in_context(t, r), ValidationError);
}

TEST_CASE("match_label uses trimmed, case-folded first line") {
  const auto t = simple({"true", "false", "inconclusive"});
  CHECK(match_label(" False\n", t) == 1);
  CHECK(match_label("definitely", t) == kInvalidLabel);
  CHECK(match_label("true because of x", t) == kInvalidLabel);
  CHECK(match_label("INCONCLUSIVE\r\nmore", t) == 2);
  CHECK(match_label("", t) == kInvalidLabel);
}

TEST_CASE("bundled set: names, invariants and round-trips") {
  const TemplateSet set(bundled_templates());
  const auto anli = set.for_task(Task::ANLI);
  REQUIRE(anli.size() == 15);
  REQUIRE(set.for_task(Task::MNLI).size() == 15);
  REQUIRE(set.for_task(Task::QQP).size() == 1);
  for (std::size_t i = 0; i < anli.size(); ++i) CHECK(anli[i]->template_id == static_cast<int>(i) + 1);
  int verbatim = 0;
  const auto records = testing::synthetic_records(Task::ANLI, Split::Train, 6, 1);
  for (const auto& t : set.all()) {
    CAPTURE(t.name);
    validate_template(t);
    for (std::size_t i = 0; i < t.answer_choices.size(); ++i)
      CHECK(match_label(t.answer_choices[i], t) == static_cast<int>(i));
    CHECK(parse_template(serialize_template(t)).pattern == t.pattern);
    if (t.task == Task::ANLI) {
      verbatim += t.reconstruction ? 0 : 1;
      for (const auto& r : records) {
        const auto target = render_target(t, r).text;
        CHECK(render_in_context(t, r).text.rfind(target, 0) == 0);
      }
    }
  }
  CHECK(verbatim == 4);
  CHECK(set.get(Task::ANLI, "Does It Follow That").quality == Quality::High);
  CHECK(set.get(Task::ANLI, "MNLI Crowdsource").quality == Quality::Low);
}

TEST_CASE("template validation") {
  CHECK_THROWS_AS(validate_template(simple({"x", "y"})), ValidationError);
  CHECK_THROWS_AS(validate_template(simple({"Yes", "yes", "no"})), ValidationError);
  auto t = simple({"x", "y", "z"});
  t.pattern = "{field_a} {field_a} {field_b}";
  CHECK_THROWS_AS(validate_template(t), ValidationError);
  t.pattern = "{field_a}";
  CHECK_THROWS_AS(validate_template(t), ValidationError);
  CHECK_NOTHROW(validate_template(simple({"no", "yes"}, Task::QQP)));
}

TEST_CASE("load_templates from directories") {
  namespace fs = std::filesystem;
  const auto dir = testing::scratch_dir("templates");
  CHECK_THROWS_WITH_AS(load_templates(dir), "no templates found", ValidationError);
  auto write = [&](const std::string& name, const InstructionTemplate& t) {
    std::ofstream(dir / name) << serialize_template(t);
  };
  auto a = simple({"x", "y", "z"});
  write("b.json", a);
  auto b = a;
  b.template_id = 0;
  b.name = "first";
  write("a.json", b);
  const auto loaded = load_templates(dir);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].name == "first");
  write("c.json", a);
  CHECK_THROWS_AS(load_templates(dir), ValidationError);
  fs::remove(dir / "c.json");
  auto bad = simple({"x", "y"});
  bad.template_id = 5;
  write("d.json", bad);
  CHECK_THROWS_AS(load_templates(dir), ValidationError);
  CHECK_THROWS_AS(load_templates(dir / "missing"), ValidationError);
}
