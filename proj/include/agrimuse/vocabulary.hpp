#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace agrimuse {

struct TopicEntry {
  int topic_id = 0;
  std::string phrase;
  std::vector<std::string> titles;
};

using TopicVocabulary = std::vector<TopicEntry>;

namespace detail {

struct RawTopic {
  std::string_view phrase;
  std::array<std::string_view, 4> titles;
};

// Titles are unique across the whole table and contain no '.'; sentence
// tagging relies on both.
inline constexpr std::array<RawTopic, 48> kBuiltinTopics{{
    {"plant potato", {"Planting Potatoes in Rows", "Potato Seed Preparation", "Hilling Potato Plants", "Harvesting Early Potatoes"}},
    {"taking care of lemon trees", {"Lemon Tree Pruning Basics", "Feeding Potted Lemon Trees", "Protecting Lemon Trees from Frost", "Lemon Tree Pest Control"}},
    {"indoor vegetable growing", {"Indoor Vegetable Growing", "Grow Lights for Indoor Vegetables", "Choosing Vegetables for Indoor Pots", "Watering Indoor Vegetable Containers"}},
    {"tomato cultivation", {"Staking Tomato Plants", "Pruning Tomato Suckers", "Starting Tomatoes from Seed", "Ripening Green Tomatoes"}},
    {"composting", {"Building a Compost Bin", "Balancing Greens and Browns", "Turning a Compost Pile", "Using Finished Compost"}},
    {"drip irrigation", {"Installing Drip Irrigation Lines", "Drip Emitter Spacing", "Automating Drip Irrigation", "Cleaning Drip Irrigation Filters"}},
    {"beekeeping", {"Setting Up a Beehive", "Inspecting Bee Frames", "Harvesting Honey", "Preparing Bees for Winter"}},
    {"raising chickens", {"Building a Chicken Coop", "Feeding Backyard Chickens", "Collecting Fresh Eggs", "Keeping Chickens Healthy"}},
    {"organic pest control", {"Companion Planting Against Pests", "Neem Oil Spray Recipe", "Attracting Beneficial Insects", "Handpicking Garden Pests"}},
    {"soil testing", {"Collecting Soil Samples", "Reading a Soil Test Report", "Adjusting Soil pH", "Testing Soil Texture by Hand"}},
    {"hydroponics", {"Building a Hydroponic System", "Mixing Hydroponic Nutrients", "Hydroponic Lettuce Growing", "Monitoring Hydroponic Water"}},
    {"growing strawberries", {"Planting Strawberry Runners", "Strawberry Bed Mulching", "Growing Strawberries in Pots", "Renovating Strawberry Beds"}},
    {"grafting fruit trees", {"Whip and Tongue Grafting", "Cleft Grafting Apple Trees", "Choosing Grafting Rootstock", "Caring for New Grafts"}},
    {"growing garlic", {"Planting Garlic Cloves", "Harvesting Garlic Bulbs", "Curing and Storing Garlic", "Growing Garlic in Containers"}},
    {"mushroom cultivation", {"Growing Oyster Mushrooms", "Inoculating Mushroom Logs", "Preparing Mushroom Substrate", "Harvesting Shiitake Mushrooms"}},
    {"vertical gardening", {"Building a Vertical Garden Wall", "Pallet Vertical Planters", "Climbing Vegetables on Trellises", "Watering Vertical Gardens"}},
    {"growing herbs", {"Growing Basil from Seed", "Harvesting Fresh Herbs", "Drying Garden Herbs", "Growing Mint in Pots"}},
    {"seed saving", {"Saving Tomato Seeds", "Drying and Storing Seeds", "Seed Germination Testing", "Saving Bean Seeds"}},
    {"greenhouse management", {"Greenhouse Ventilation Tips", "Heating a Small Greenhouse", "Greenhouse Shelving Layout", "Controlling Greenhouse Humidity"}},
    {"rice farming", {"Transplanting Rice Seedlings", "Flooding Rice Paddies", "Harvesting Rice by Hand", "Drying Rice Grain"}},
    {"wheat harvesting", {"Combine Harvester Operation", "Checking Wheat Moisture", "Storing Harvested Wheat", "Threshing Wheat by Hand"}},
    {"olive growing", {"Pruning Olive Trees", "Harvesting Olives", "Curing Table Olives", "Planting Young Olive Trees"}},
    {"vineyard care", {"Pruning Grape Vines", "Training Vines on Wires", "Grape Harvest Timing", "Preventing Grape Mildew"}},
    {"dairy goats", {"Milking Dairy Goats", "Goat Hoof Trimming", "Feeding Dairy Goats", "Kidding Season Preparation"}},
    {"cattle grazing", {"Rotational Cattle Grazing", "Building Electric Fences", "Checking Pasture Health", "Moving Cattle Between Paddocks"}},
    {"growing peppers", {"Starting Pepper Seeds Indoors", "Transplanting Pepper Seedlings", "Harvesting Hot Peppers", "Overwintering Pepper Plants"}},
    {"cover crops", {"Sowing Winter Cover Crops", "Terminating Cover Crops", "Clover as Living Mulch", "Choosing Cover Crop Mixes"}},
    {"mulching", {"Applying Straw Mulch", "Wood Chip Mulching Paths", "Mulching Around Trees", "Sheet Mulching a New Bed"}},
    {"raised bed gardening", {"Building Raised Garden Beds", "Filling Raised Beds with Soil", "Raised Bed Crop Planning", "Irrigating Raised Beds"}},
    {"apple orchards", {"Planting Apple Trees", "Thinning Apple Fruit", "Apple Tree Winter Pruning", "Storing Apples for Winter"}},
    {"growing lettuce", {"Sowing Lettuce in Succession", "Growing Lettuce in Shade", "Harvesting Cut and Come Again Lettuce", "Preventing Lettuce Bolting"}},
    {"fish farming", {"Setting Up a Fish Pond", "Feeding Farmed Tilapia", "Testing Pond Water Quality", "Harvesting Pond Fish"}},
    {"aquaponics", {"Building an Aquaponics System", "Cycling an Aquaponics Tank", "Balancing Fish and Plants", "Aquaponic Grow Bed Media"}},
    {"growing cucumbers", {"Trellising Cucumber Vines", "Pollinating Cucumbers by Hand", "Pickling Cucumber Harvest", "Cucumber Seed Sowing"}},
    {"citrus propagation", {"Rooting Citrus Cuttings", "Growing Oranges from Seed", "Air Layering Citrus Trees", "Repotting Young Citrus"}},
    {"pumpkin growing", {"Planting Pumpkin Hills", "Growing Giant Pumpkins", "Curing Harvested Pumpkins", "Managing Pumpkin Vines"}},
    {"weed management", {"Hand Weeding Techniques", "Using a Stirrup Hoe", "Flame Weeding Basics", "Preventing Weeds with Mulch"}},
    {"tractor maintenance", {"Changing Tractor Oil", "Tractor Tire Pressure Check", "Greasing Tractor Fittings", "Tractor Battery Care"}},
    {"rainwater harvesting", {"Installing a Rain Barrel", "Gutter Rainwater Collection", "Filtering Harvested Rainwater", "Building a Rainwater Tank"}},
    {"growing onions", {"Planting Onion Sets", "Growing Onions from Seed", "Harvesting and Drying Onions", "Braiding Onions for Storage"}},
    {"berry bushes", {"Pruning Blueberry Bushes", "Planting Raspberry Canes", "Acidifying Soil for Blueberries", "Harvesting Blackberries"}},
    {"growing carrots", {"Sowing Carrot Seeds", "Thinning Carrot Seedlings", "Growing Carrots in Containers", "Storing Carrots in Sand"}},
    {"sheep farming", {"Shearing Sheep", "Lambing Season Care", "Sheep Pasture Rotation", "Trimming Sheep Hooves"}},
    {"microgreens", {"Growing Microgreens on Trays", "Harvesting Microgreens", "Microgreen Seed Soaking", "Microgreens Without Soil"}},
    {"banana cultivation", {"Planting Banana Suckers", "Propping Banana Plants", "Harvesting Banana Bunches", "Banana Plant Fertilizing"}},
    {"coffee growing", {"Growing Coffee Seedlings", "Picking Ripe Coffee Cherries", "Drying Coffee Beans", "Shade Trees for Coffee"}},
    {"maize cultivation", {"Sowing Maize in Blocks", "Side Dressing Maize", "Detasseling Corn", "Harvesting Sweet Corn"}},
    {"tea cultivation", {"Plucking Tea Leaves", "Pruning Tea Bushes", "Withering Tea Leaves", "Planting Tea Cuttings"}},
}};

}  // namespace detail

/// The built-in agricultural topic list. Topic ids are positions in the
/// table.
inline TopicVocabulary builtin_vocabulary() {
  TopicVocabulary vocab;
  vocab.reserve(detail::kBuiltinTopics.size());
  for (std::size_t i = 0; i < detail::kBuiltinTopics.size(); ++i) {
    const auto& raw = detail::kBuiltinTopics[i];
    TopicEntry e;
    e.topic_id = static_cast<int>(i);
    e.phrase = std::string(raw.phrase);
    for (auto t : raw.titles) e.titles.emplace_back(t);
    vocab.push_back(std::move(e));
  }
  return vocab;
}

}  // namespace agrimuse
