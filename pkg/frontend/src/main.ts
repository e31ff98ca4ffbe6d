import { NavApi } from "./api.js";
import { mountNavigator } from "./render.js";

const container = document.getElementById("app");
if (container) {
  void mountNavigator(container as HTMLElement, new NavApi(""));
}
