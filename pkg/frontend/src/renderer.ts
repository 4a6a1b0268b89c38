/**
 * three.js view of the voxel grid: instanced cubes, a ground plane with grid
 * lines, hover highlight for the targeted cell, and a small orbit/zoom
 * camera driven by pointer events.
 *
 * Picking follows the usual voxel-editor rule: hovering an occupied cube
 * targets the face-adjacent empty cell for painting, or the cube itself for
 * erasing; hovering the ground plane targets the cell above it.
 */

import * as THREE from "three";

import { VoxelGridData } from "./grid.js";

export interface PickResult {
  // cell the paint tool would fill
  paint: [number, number, number] | null;
  // cell the erase tool would clear
  erase: [number, number, number] | null;
}

/**
 * Grid cell [x,y,z] (grid z = up) to the cube-center scene position
 * (scene y = up). Kept as a free function so the mapping is testable
 * without a GL context.
 */
export function cellCenter(x: number, y: number, z: number): [number, number, number] {
  return [x + 0.5, z + 0.5, y + 0.5];
}

export class VoxelRenderer {
  readonly scene: THREE.Scene;
  readonly camera: THREE.PerspectiveCamera;
  private renderer: THREE.WebGLRenderer;
  private cubes: THREE.InstancedMesh | null = null;
  private highlight: THREE.Mesh;
  private ground: THREE.Mesh;
  private raycaster = new THREE.Raycaster();
  private dims: number;
  private cellsAtLastSync: Array<[number, number, number]> = [];

  // orbit state
  private azimuth = Math.PI / 4;
  private polar = Math.PI / 3;
  private distance: number;

  constructor(canvas: HTMLCanvasElement, dims: number) {
    this.dims = dims;
    this.scene = new THREE.Scene();
    this.scene.background = new THREE.Color(0x16181d);
    this.camera = new THREE.PerspectiveCamera(45, 1, 0.1, 1000);
    this.distance = dims * 2.2;

    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });

    const key = new THREE.DirectionalLight(0xffffff, 2.2);
    key.position.set(1.5, 2.5, 1.0);
    this.scene.add(key);
    this.scene.add(new THREE.AmbientLight(0x8899bb, 1.1));

    this.ground = new THREE.Mesh(
      new THREE.PlaneGeometry(dims, dims),
      new THREE.MeshLambertMaterial({ color: 0x20242c, side: THREE.DoubleSide }),
    );
    this.ground.rotation.x = -Math.PI / 2;
    this.ground.position.set(dims / 2, -0.01, dims / 2);
    this.scene.add(this.ground);
    const gridLines = new THREE.GridHelper(dims, dims, 0x3a4150, 0x2a2f3a);
    gridLines.position.set(dims / 2, 0, dims / 2);
    this.scene.add(gridLines);

    this.highlight = new THREE.Mesh(
      new THREE.BoxGeometry(1.02, 1.02, 1.02),
      new THREE.MeshBasicMaterial({ color: 0x7fd4ff, transparent: true, opacity: 0.4 }),
    );
    this.highlight.visible = false;
    this.scene.add(this.highlight);

    this.updateCamera();
  }

  cellToScene(x: number, y: number, z: number): THREE.Vector3 {
    return new THREE.Vector3(...cellCenter(x, y, z));
  }

  private sceneToCell(p: THREE.Vector3): [number, number, number] {
    return [Math.floor(p.x), Math.floor(p.z), Math.floor(p.y)];
  }

  syncGrid(grid: VoxelGridData): void {
    if (this.cubes) {
      this.scene.remove(this.cubes);
      this.cubes.dispose();
      this.cubes = null;
    }
    this.dims = grid.dims;
    const cells = grid.occupiedCells();
    this.cellsAtLastSync = cells;
    if (cells.length === 0) return;
    const mesh = new THREE.InstancedMesh(
      new THREE.BoxGeometry(1, 1, 1),
      new THREE.MeshLambertMaterial({ color: 0xe8b24a }),
      cells.length,
    );
    const m = new THREE.Matrix4();
    cells.forEach(([x, y, z], i) => {
      m.setPosition(this.cellToScene(x, y, z));
      mesh.setMatrixAt(i, m);
    });
    mesh.instanceMatrix.needsUpdate = true;
    this.cubes = mesh;
    this.scene.add(mesh);
  }

  /** Raycast pick at normalized device coords (-1..1). */
  pick(ndcX: number, ndcY: number): PickResult {
    this.raycaster.setFromCamera(new THREE.Vector2(ndcX, ndcY), this.camera);
    if (this.cubes) {
      const hits = this.raycaster.intersectObject(this.cubes);
      const hit = hits.find((h) => h.instanceId !== undefined);
      if (hit && hit.instanceId !== undefined && hit.face) {
        const cell = this.cellsAtLastSync[hit.instanceId];
        const n = hit.face.normal;
        const neighbor: [number, number, number] = [
          cell[0] + Math.round(n.x),
          cell[1] + Math.round(n.z),
          cell[2] + Math.round(n.y),
        ];
        return { paint: neighbor, erase: cell };
      }
    }
    const groundHits = this.raycaster.intersectObject(this.ground);
    if (groundHits.length > 0) {
      const p = groundHits[0].point;
      const cell = this.sceneToCell(new THREE.Vector3(p.x, 0.5, p.z));
      return { paint: cell, erase: null };
    }
    return { paint: null, erase: null };
  }

  setHighlight(cell: [number, number, number] | null): void {
    if (!cell) {
      this.highlight.visible = false;
      return;
    }
    this.highlight.position.copy(this.cellToScene(...cell));
    this.highlight.visible = true;
  }

  orbitBy(dAzimuth: number, dPolar: number): void {
    this.azimuth += dAzimuth;
    this.polar = Math.min(Math.PI - 0.15, Math.max(0.15, this.polar + dPolar));
    this.updateCamera();
  }

  zoomBy(factor: number): void {
    this.distance = Math.min(this.dims * 8, Math.max(this.dims * 0.6, this.distance * factor));
    this.updateCamera();
  }

  private updateCamera(): void {
    const c = this.dims / 2;
    this.camera.position.set(
      c + this.distance * Math.sin(this.polar) * Math.cos(this.azimuth),
      c + this.distance * Math.cos(this.polar),
      c + this.distance * Math.sin(this.polar) * Math.sin(this.azimuth),
    );
    this.camera.lookAt(c, c * 0.8, c);
  }

  resize(width: number, height: number): void {
    this.camera.aspect = width / height;
    this.camera.updateProjectionMatrix();
    this.renderer.setSize(width, height, false);
  }

  render(): void {
    this.renderer.render(this.scene, this.camera);
  }
}
