/** Browser entry point: mount the console against a gateway URL.
 *
 * The page is static, so the gateway origin defaults to the page origin
 * and can be overridden with ?gateway=http://host:port when the page is
 * served from somewhere else.
 */

import { mountConsole } from "./app.js";
import { GatewayClient } from "./client.js";

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app container");
}
const gateway =
  new URLSearchParams(window.location.search).get("gateway") ??
  window.location.origin;
mountConsole(root, new GatewayClient(gateway));
